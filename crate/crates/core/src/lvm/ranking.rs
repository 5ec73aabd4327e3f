use serde::{Deserialize, Serialize};

use crate::corpus::GenderClass;
use crate::error::{Error, Result};
use crate::lexfusion::SentimentClass;

use super::params::{Gender, ModelParams};

/// How deviations from several models are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of exp(η) across models.
    #[default]
    Tau,
    /// exp of the mean η.
    Eta,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Averaging::Tau),
            "eta" => Ok(Averaging::Eta),
            _ => Err(Error::invalid(format!("unknown averaging {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRanking {
    pub gender: GenderClass,
    pub sentiment: SentimentClass,
    /// (lemma, τ), τ descending, ties by lemma.
    pub items: Vec<(String, f64)>,
}

impl DeviationRanking {
    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(l, _)| l.as_str())
    }
}

/// Ranks words by τ_w = exp(η(w, sentiment)[gender]), the word bias m_w
/// left out, averaged over `models`.
pub fn deviation_ranking(
    models: &[ModelParams],
    gender: GenderClass,
    sentiment: SentimentClass,
    k: usize,
) -> Result<DeviationRanking> {
    deviation_ranking_with(models, gender, sentiment, k, Averaging::Tau)
}

pub fn deviation_ranking_with(
    models: &[ModelParams],
    gender: GenderClass,
    sentiment: SentimentClass,
    k: usize,
    averaging: Averaging,
) -> Result<DeviationRanking> {
    let first = models.first().ok_or_else(|| Error::invalid("no models to rank"))?;
    if models.iter().any(|m| m.vocab != first.vocab) {
        return Err(Error::invalid("models were trained on different vocabularies"));
    }
    let g = Gender::try_from(gender)?;
    let n = models.len() as f64;
    let mut items: Vec<(String, f64)> = first
        .vocab
        .iter()
        .enumerate()
        .map(|(w, lemma)| {
            let tau = match averaging {
                Averaging::Tau => models.iter().map(|m| m.eta_at(w, sentiment, g).exp()).sum::<f64>() / n,
                Averaging::Eta => (models.iter().map(|m| m.eta_at(w, sentiment, g)).sum::<f64>() / n).exp(),
            };
            (lemma.clone(), tau)
        })
        .collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.truncate(k);
    Ok(DeviationRanking {
        gender,
        sentiment,
        items,
    })
}

/// Rankings for every (gender, sentiment) pair: male then female, each
/// POS, NEG, NEU.
pub fn all_rankings(models: &[ModelParams], k: usize, averaging: Averaging) -> Result<Vec<DeviationRanking>> {
    let mut out = Vec::with_capacity(6);
    for g in Gender::ALL {
        for s in SentimentClass::ALL {
            out.push(deviation_ranking_with(models, g.class(), s, k, averaging)?);
        }
    }
    Ok(out)
}
