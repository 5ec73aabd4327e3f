//! Multi-view latent-Dirichlet fusion fit by stochastic variational inference.
//!
//! Generative story: each word has a sentiment mixture θ_w ~ Dir(base_prior).
//! A view v reports a label distribution x_wv over (POS, NEG, NEU) drawn
//! through a view-specific emission matrix E_v (rows = latent sentiment,
//! columns = reported label), with Dirichlet priors on the rows that favor
//! the diagonal so the latent axes keep their sentiment meaning.
//!
//! The encoder is the per-word variational Dirichlet q(θ_w) = Dir(γ_w),
//! fit by local coordinate ascent; the decoders are the emission matrices,
//! updated with natural-gradient steps on minibatches. The fused
//! concentration of a word is its final γ_w.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{view_observations, FusedLexicon, FusionConfig, RawLexicon};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size ρ_t = (t + delay)^(-forgetting).
    pub delay: f64,
    pub forgetting: f64,
    pub local_iters: usize,
    pub diag_prior: f64,
    pub off_diag_prior: f64,
    pub seed: u64,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        VariationalConfig {
            epochs: 30,
            batch_size: 64,
            delay: 1.0,
            forgetting: 0.7,
            local_iters: 25,
            diag_prior: 10.0,
            off_diag_prior: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariationalFit {
    pub lexicon: FusedLexicon,
    /// Evidence lower bound after each epoch.
    pub elbo_trace: Vec<f64>,
    /// Per-view emission Dirichlet parameters λ_v[s][label].
    pub emissions: Vec<[[f64; 3]; 3]>,
}

type Obs = Vec<(usize, [f64; 3])>;

fn expected_log_rows(lambda: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for s in 0..3 {
        let total: f64 = lambda[s].iter().sum();
        let dt = digamma(total);
        for l in 0..3 {
            out[s][l] = digamma(lambda[s][l]) - dt;
        }
    }
    out
}

fn dirichlet_kl(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let a0: f64 = a.iter().sum();
    let b0: f64 = b.iter().sum();
    let mut kl = ln_gamma(a0) - ln_gamma(b0);
    let da0 = digamma(a0);
    for k in 0..3 {
        kl += ln_gamma(b[k]) - ln_gamma(a[k]) + (a[k] - b[k]) * (digamma(a[k]) - da0);
    }
    kl
}

struct Local {
    gamma: [f64; 3],
    /// responsibilities φ[obs][label][s]
    phi: Vec<[[f64; 3]; 3]>,
}

fn fit_local(obs: &Obs, elog_e: &[[[f64; 3]; 3]], prior: &[f64; 3], weight: f64, iters: usize) -> Local {
    let mut gamma = *prior;
    for (_, x) in obs {
        for k in 0..3 {
            gamma[k] += weight * x[k];
        }
    }
    let mut phi = vec![[[0.0; 3]; 3]; obs.len()];
    for _ in 0..iters.max(1) {
        let g0: f64 = gamma.iter().sum();
        let dg0 = digamma(g0);
        let elog_theta = [digamma(gamma[0]) - dg0, digamma(gamma[1]) - dg0, digamma(gamma[2]) - dg0];
        let mut next = *prior;
        for (i, (v, x)) in obs.iter().enumerate() {
            for l in 0..3 {
                let mut logits = [0.0; 3];
                for s in 0..3 {
                    logits[s] = elog_theta[s] + elog_e[*v][s][l];
                }
                crate::util::softmax_in_place(&mut logits);
                phi[i][l] = logits;
                for s in 0..3 {
                    next[s] += weight * x[l] * logits[s];
                }
            }
        }
        let delta: f64 = next.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).sum();
        gamma = next;
        if delta < 1e-10 {
            break;
        }
    }
    Local { gamma, phi }
}

fn local_elbo(obs: &Obs, local: &Local, elog_e: &[[[f64; 3]; 3]], prior: &[f64; 3], weight: f64) -> f64 {
    let g0: f64 = local.gamma.iter().sum();
    let dg0 = digamma(g0);
    let elog_theta: Vec<f64> = local.gamma.iter().map(|g| digamma(*g) - dg0).collect();
    let mut elbo = -dirichlet_kl(&local.gamma, prior);
    for (i, (v, x)) in obs.iter().enumerate() {
        for l in 0..3 {
            if x[l] == 0.0 {
                continue;
            }
            for s in 0..3 {
                let p = local.phi[i][l][s];
                if p > 0.0 {
                    elbo += weight * x[l] * p * (elog_theta[s] + elog_e[*v][s][l] - p.ln());
                }
            }
        }
    }
    elbo
}

/// Fits the multi-view model and returns per-word concentrations.
pub fn fuse_variational(views: &[RawLexicon], config: &FusionConfig) -> Result<VariationalFit> {
    if views.is_empty() {
        return Err(Error::invalid("fusion needs at least one lexicon view"));
    }
    let vc = &config.variational;
    if vc.batch_size == 0 || !(vc.forgetting > 0.5 && vc.forgetting <= 1.0) || !(vc.delay >= 0.0) {
        return Err(Error::invalid(
            "variational fusion needs batch_size >= 1, forgetting in (0.5, 1] and delay >= 0",
        ));
    }
    let prior = config.base_prior;
    let weight = config.view_weight;
    let words: Vec<(String, Obs)> = view_observations(views).into_iter().collect();
    let n_words = words.len();

    let mut lambda0 = [[vc.off_diag_prior; 3]; 3];
    for (s, row) in lambda0.iter_mut().enumerate() {
        row[s] = vc.diag_prior;
    }
    let mut lambda = vec![lambda0; views.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(vc.seed);
    let mut order: Vec<usize> = (0..n_words).collect();
    let mut elbo_trace = Vec::with_capacity(vc.epochs);
    let mut t = 0usize;

    for _ in 0..vc.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(vc.batch_size) {
            let elog_e: Vec<_> = lambda.iter().map(expected_log_rows).collect();
            let mut stats = vec![[[0.0; 3]; 3]; views.len()];
            for &wi in batch {
                let obs = &words[wi].1;
                let local = fit_local(obs, &elog_e, &prior, weight, vc.local_iters);
                for (i, (v, x)) in obs.iter().enumerate() {
                    for l in 0..3 {
                        for s in 0..3 {
                            stats[*v][s][l] += weight * x[l] * local.phi[i][l][s];
                        }
                    }
                }
            }
            let rho = (t as f64 + vc.delay).powf(-vc.forgetting).min(1.0);
            let scale = n_words as f64 / batch.len() as f64;
            for (lv, sv) in lambda.iter_mut().zip(&stats) {
                for s in 0..3 {
                    for l in 0..3 {
                        let target = lambda0[s][l] + scale * sv[s][l];
                        lv[s][l] = (1.0 - rho) * lv[s][l] + rho * target;
                    }
                }
            }
            t += 1;
        }
        let elog_e: Vec<_> = lambda.iter().map(expected_log_rows).collect();
        let mut elbo: f64 = words
            .iter()
            .map(|(_, obs)| {
                let local = fit_local(obs, &elog_e, &prior, weight, vc.local_iters);
                local_elbo(obs, &local, &elog_e, &prior, weight)
            })
            .sum();
        for lv in &lambda {
            for s in 0..3 {
                elbo -= dirichlet_kl(&lv[s], &lambda0[s]);
            }
        }
        elbo_trace.push(elbo);
    }

    let elog_e: Vec<_> = lambda.iter().map(expected_log_rows).collect();
    let entries = words
        .iter()
        .map(|(w, obs)| (w.clone(), fit_local(obs, &elog_e, &prior, weight, vc.local_iters).gamma))
        .collect();
    Ok(VariationalFit {
        lexicon: FusedLexicon { entries },
        elbo_trace,
        emissions: lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexfusion::{RawScore, Scale, SentimentClass};

    fn view(name: &str, scale: Scale, words: &[(&str, f64)]) -> RawLexicon {
        RawLexicon {
            name: name.into(),
            language: "en".into(),
            scale,
            entries: words
                .iter()
                .map(|(w, s)| (w.to_string(), RawScore::Scalar(*s)))
                .collect(),
        }
    }

    fn fixture() -> Vec<RawLexicon> {
        vec![
            view(
                "bin",
                Scale::Binary,
                &[("good", 1.0), ("great", 1.0), ("bad", -1.0), ("awful", -1.0), ("kind", 1.0)],
            ),
            view(
                "ter",
                Scale::Ternary,
                &[("good", 1.0), ("bad", -1.0), ("table", 0.0), ("chair", 0.0), ("awful", -1.0)],
            ),
            view(
                "cont",
                Scale::Continuous,
                &[("good", 0.8), ("great", 0.9), ("bad", -0.7), ("table", 0.05), ("kind", 0.4)],
            ),
        ]
    }

    #[test]
    fn recovers_obvious_polarity() {
        let fit = fuse_variational(&fixture(), &FusionConfig::default()).unwrap();
        let lex = &fit.lexicon;
        assert_eq!(lex.argmax("good"), Some(SentimentClass::Pos));
        assert_eq!(lex.argmax("great"), Some(SentimentClass::Pos));
        assert_eq!(lex.argmax("bad"), Some(SentimentClass::Neg));
        assert_eq!(lex.argmax("awful"), Some(SentimentClass::Neg));
        assert_eq!(lex.argmax("table"), Some(SentimentClass::Neu));
        for alpha in lex.entries.values() {
            assert!(alpha.iter().all(|a| *a > 0.0));
        }
        assert_eq!(lex.len(), 7);
    }

    #[test]
    fn seeded_runs_match() {
        let a = fuse_variational(&fixture(), &FusionConfig::default()).unwrap();
        let b = fuse_variational(&fixture(), &FusionConfig::default()).unwrap();
        assert_eq!(a.lexicon, b.lexicon);
        assert_eq!(a.elbo_trace, b.elbo_trace);
    }

    #[test]
    fn elbo_is_finite_and_settles() {
        let fit = fuse_variational(&fixture(), &FusionConfig::default()).unwrap();
        assert!(fit.elbo_trace.iter().all(|e| e.is_finite()));
        let first = fit.elbo_trace[0];
        let last = *fit.elbo_trace.last().unwrap();
        assert!(last >= first - 1e-6, "elbo went from {first} to {last}");
    }

    #[test]
    fn dirichlet_kl_zero_on_self() {
        let a = [2.0, 3.0, 0.5];
        assert!(dirichlet_kl(&a, &a).abs() < 1e-12);
        assert!(dirichlet_kl(&a, &[1.0, 1.0, 1.0]) > 0.0);
    }
}
