//! Synthetic probe data drawn from a known parameter set.
//!
//! Used to check that training recovers planted structure: every word gets a
//! "home" sentiment shared by both genders, and a chosen set of positive
//! words additionally gets a female-only boost.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::corpus::GenderClass;
use crate::error::{Error, Result};
use crate::lexfusion::{FusedLexicon, SentimentClass};
use crate::vocabfilter::{FilterReport, FilteredEntity, FilteredProbeSet, PosClass};

use super::model::{posterior_sentiment_all, word_dist};
use super::params::{init_params_with_sigma, Gender, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_words: usize,
    pub n_entities: usize,
    pub female_fraction: f64,
    /// Number of positive words that receive the female-only boost.
    pub planted: usize,
    pub planted_strength: f64,
    /// Shared η on each word's home sentiment.
    pub sentiment_strength: f64,
    pub bias_sigma: f64,
    /// Multinomial draws per entity; 0 uses the exact distribution.
    pub draws_per_entity: usize,
    /// Dirichlet concentration of the generated lexicon.
    pub lexicon_concentration: f64,
    pub seed: u64,
    pub model_id: String,
    pub language: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_words: 60,
            n_entities: 150,
            female_fraction: 0.25,
            planted: 10,
            planted_strength: 2.0,
            sentiment_strength: 1.5,
            bias_sigma: 0.5,
            draws_per_entity: 200,
            lexicon_concentration: 20.0,
            seed: 7,
            model_id: "synthetic".into(),
            language: "en".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub truth: ModelParams,
    pub data: FilteredProbeSet,
    pub lexicon: FusedLexicon,
    pub planted: Vec<String>,
    pub home: Vec<SentimentClass>,
}

pub fn word_name(i: usize) -> String {
    format!("w{i:03}")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.n_words < 3 || spec.n_entities < 2 || !(0.0..=1.0).contains(&spec.female_fraction) {
        return Err(Error::invalid("synthetic corpus needs >= 3 words, >= 2 entities"));
    }
    let vocab: Vec<String> = (0..spec.n_words).map(word_name).collect();
    let home: Vec<SentimentClass> = (0..spec.n_words).map(|i| SentimentClass::from_index(i % 3)).collect();
    let positives: Vec<usize> = (0..spec.n_words).filter(|i| home[*i] == SentimentClass::Pos).collect();
    if spec.planted > positives.len() {
        return Err(Error::invalid("more planted words than positive words"));
    }
    let n_female = ((spec.n_entities as f64) * spec.female_fraction).round() as usize;
    let prior_f = n_female as f64 / spec.n_entities as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = init_params_with_sigma(&vocab, [1.0 - prior_f, prior_f], 0, 0.0)?;
    let normal = Normal::new(0.0, spec.bias_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    for m in truth.m.iter_mut() {
        *m = normal.sample(&mut rng);
    }
    for (w, h) in home.iter().enumerate() {
        for g in 0..2 {
            truth.eta[w][h.index()][g] = spec.sentiment_strength;
        }
    }
    let planted_idx: Vec<usize> = positives[..spec.planted].to_vec();
    for &w in &planted_idx {
        truth.eta[w][SentimentClass::Pos.index()][Gender::Female.index()] += spec.planted_strength;
    }

    let marginal = |g: Gender| -> Vec<f64> {
        let pi = super::model::sentiment_prior(&truth, g);
        let mut out = vec![0.0; spec.n_words];
        for s in SentimentClass::ALL {
            for (o, p) in out.iter_mut().zip(word_dist(&truth, s, g)) {
                *o += pi[s.index()] * p;
            }
        }
        out
    };
    let dists = [marginal(Gender::Male), marginal(Gender::Female)];

    let mut entities = Vec::with_capacity(spec.n_entities);
    for i in 0..spec.n_entities {
        let g = if i < n_female { Gender::Female } else { Gender::Male };
        let dist = &dists[g.index()];
        let probs: Vec<f64> = if spec.draws_per_entity == 0 {
            dist.clone()
        } else {
            let sampler = WeightedIndex::new(dist).map_err(|e| Error::invalid(e.to_string()))?;
            let mut counts = vec![0usize; spec.n_words];
            for _ in 0..spec.draws_per_entity {
                counts[sampler.sample(&mut rng)] += 1;
            }
            counts
                .iter()
                .map(|c| *c as f64 / spec.draws_per_entity as f64)
                .collect()
        };
        let mut lemmas: Vec<(String, f64)> = probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(w, p)| (vocab[w].clone(), *p))
            .collect();
        lemmas.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entities.push(FilteredEntity {
            model_id: spec.model_id.clone(),
            language: spec.language.clone(),
            entity_id: format!("E{i:04}"),
            gender: g.class(),
            lemmas,
        });
    }

    let posts = posterior_sentiment_all(&truth);
    let lexicon = FusedLexicon {
        entries: vocab
            .iter()
            .zip(&posts)
            .map(|(w, p)| {
                let c = spec.lexicon_concentration;
                (w.clone(), [p[0] * c, p[1] * c, p[2] * c])
            })
            .collect(),
    };

    Ok(SyntheticCorpus {
        planted: planted_idx.iter().map(|&w| vocab[w].clone()).collect(),
        truth,
        data: FilteredProbeSet {
            language: spec.language.clone(),
            pos_class: PosClass::Adj,
            top_k: spec.n_words,
            entities,
            report: FilterReport::default(),
        },
        lexicon,
        home,
    })
}

impl SyntheticCorpus {
    pub fn gender_of(&self, entity_id: &str) -> Option<GenderClass> {
        self.data
            .entities
            .iter()
            .find(|e| e.entity_id == entity_id)
            .map(|e| e.gender)
    }
}
