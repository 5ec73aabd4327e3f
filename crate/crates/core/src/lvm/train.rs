use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexfusion::FusedLexicon;
use crate::vocabfilter::FilteredProbeSet;

use super::adam::Adam;
use super::objective::{LossParts, Objective, TrainingData};
use super::params::{init_params_with_sigma, ModelParams, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Total loss before each Adam step, plus the loss of the returned parameters.
    pub loss_trace: Vec<f64>,
    pub final_loss: LossParts,
    pub steps: usize,
}

/// Runs Adam from a seeded initialization until `max_steps` or until the
/// loss changes by less than `tol` between consecutive steps.
pub fn train_on(data: &TrainingData, lexicon: &FusedLexicon, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let objective = Objective::new(data.clone(), lexicon, config.alpha, config.beta)?;
    let mut params = init_params_with_sigma(&data.vocab, data.empirical_prior(), config.seed, config.init_sigma)?;
    params.config = Some(config.clone());
    let mut flat = params.flatten();
    let mut adam = Adam::new(
        flat.len(),
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut trace = Vec::with_capacity(config.max_steps + 1);
    let mut prev_total: Option<f64> = None;
    let mut last: Option<LossParts> = None;
    let mut steps = 0;
    for step in 0..config.max_steps {
        let (parts, grad) = objective.loss_and_gradient(&params)?;
        let grad = grad.flatten();
        if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        trace.push(parts.total);
        if matches!(prev_total, Some(prev) if (parts.total - prev).abs() < config.tol) {
            last = Some(parts);
            break;
        }
        prev_total = Some(parts.total);
        adam.step(&mut flat, &grad);
        params.assign_flat(&flat);
        steps = step + 1;
    }
    let final_loss = match last {
        Some(parts) => parts,
        None => {
            let parts = objective.loss(&params)?;
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss { step: steps });
            }
            trace.push(parts.total);
            parts
        }
    };
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
        final_loss,
        steps,
    })
}

pub fn train(data: &FilteredProbeSet, lexicon: &FusedLexicon, config: &TrainConfig) -> Result<ModelParams> {
    let td = TrainingData::from_filtered(data)?;
    Ok(train_on(&td, lexicon, config)?.params)
}

/// One run per (α, β) pair, α-major. Runs execute in parallel; each is
/// seeded identically, so results do not depend on scheduling.
pub fn grid_train_on(
    data: &TrainingData,
    lexicon: &FusedLexicon,
    alpha_grid: &[f64],
    beta_grid: &[f64],
    base: &TrainConfig,
) -> Result<Vec<TrainOutcome>> {
    if alpha_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::invalid("hyperparameter grids must be non-empty"));
    }
    let configs: Vec<TrainConfig> = alpha_grid
        .iter()
        .flat_map(|&alpha| {
            beta_grid.iter().map(move |&beta| TrainConfig {
                alpha,
                beta,
                ..base.clone()
            })
        })
        .collect();
    configs.par_iter().map(|c| train_on(data, lexicon, c)).collect()
}

pub fn grid_train(
    data: &FilteredProbeSet,
    lexicon: &FusedLexicon,
    alpha_grid: &[f64],
    beta_grid: &[f64],
    base: &TrainConfig,
) -> Result<Vec<ModelParams>> {
    let td = TrainingData::from_filtered(data)?;
    Ok(grid_train_on(&td, lexicon, alpha_grid, beta_grid, base)?
        .into_iter()
        .map(|o| o.params)
        .collect())
}
