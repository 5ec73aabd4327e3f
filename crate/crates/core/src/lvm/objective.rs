//! Training objective and its analytic gradient.
//!
//! loss = −L_main + β·KL + α·L1, where
//!
//! * L_main = Σ_n Σ_w p̂(w|n) log p(w, g_n). Because it is linear in p̂ it is
//!   evaluated on per-gender aggregated mass C[g][w] = Σ_{n: g_n = g} p̂(w|n).
//! * KL = Σ_w u(w) KL(q(·|w) ‖ p(·|w)) over lexicon-covered words, with u(w)
//!   the word's p̂ mass normalized over covered words and q the lexicon's
//!   Dirichlet mean.
//! * L1 = Σ_{w,s} ‖η(w, s)‖₁, with subgradient sign(η) (0 at 0).
//!
//! Logits of p(w|s,g) are ℓ_sg[w] = m_w + η(w,s)[g]. Writing J_wsg = p(w,s,g),
//! the gradients with respect to ℓ_sg[w] are
//!
//! * −L_main: −(C[g][w] r_gsw − p(w|s,g) R_gs) with r_gsw = J_wsg / Σ_s J_wsg
//!   and R_gs = Σ_w C[g][w] r_gsw;
//! * KL: u_w a_wsg − p(w|s,g) Σ_w' u_w' a_w'sg with
//!   a_wsg = J_wsg / Z_w − q_ws J_wsg / Σ_g J_wsg.
//!
//! ∂/∂m_w sums the ℓ-gradients over (s, g); ∂/∂η(w,s)[g] is the ℓ-gradient
//! itself plus the L1 term. Sentiment logits follow from the softmax
//! Jacobian in the same way.

use serde::{Deserialize, Serialize};

use crate::corpus::GenderClass;
use crate::error::{Error, Result};
use crate::lexfusion::FusedLexicon;
use crate::vocabfilter::FilteredProbeSet;

use super::model::Forward;
use super::params::{Gender, ModelParams};

/// Per-gender aggregated word mass over male and female entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingData {
    pub vocab: Vec<String>,
    /// counts[g][w] = Σ_{n : g_n = g} p̂(w | n)
    pub counts: [Vec<f64>; 2],
    pub entity_counts: [usize; 2],
    /// Entities of gender OTHER, which the model does not cover.
    pub skipped_other: usize,
}

impl TrainingData {
    /// Sorted, deduplicated lemmas of the male and female entities.
    pub fn vocab_of(data: &FilteredProbeSet) -> Vec<String> {
        let mut v: Vec<String> = data
            .entities
            .iter()
            .filter(|e| e.gender != GenderClass::Other)
            .flat_map(|e| e.lemmas.iter().map(|(l, _)| l.clone()))
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn new(data: &FilteredProbeSet, vocab: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> =
            vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let mut counts = [vec![0.0; vocab.len()], vec![0.0; vocab.len()]];
        let mut entity_counts = [0usize; 2];
        let mut skipped_other = 0;
        for e in &data.entities {
            let g = match Gender::try_from(e.gender) {
                Ok(g) => g.index(),
                Err(_) => {
                    skipped_other += 1;
                    continue;
                }
            };
            entity_counts[g] += 1;
            for (lemma, p) in &e.lemmas {
                let w = *index
                    .get(lemma.as_str())
                    .ok_or_else(|| Error::UnknownLemma(lemma.clone()))?;
                counts[g][w] += p;
            }
        }
        Ok(TrainingData {
            vocab: vocab.to_vec(),
            counts,
            entity_counts,
            skipped_other,
        })
    }

    /// Builds the data and its own vocabulary in one go.
    pub fn from_filtered(data: &FilteredProbeSet) -> Result<Self> {
        let vocab = Self::vocab_of(data);
        if vocab.is_empty() {
            return Err(Error::invalid("no male or female entities with lemmas"));
        }
        Self::new(data, &vocab)
    }

    /// Fraction of male and female entities.
    pub fn empirical_prior(&self) -> [f64; 2] {
        let total = (self.entity_counts[0] + self.entity_counts[1]) as f64;
        if total == 0.0 {
            return [0.5, 0.5];
        }
        [self.entity_counts[0] as f64 / total, self.entity_counts[1] as f64 / total]
    }

    pub fn word_mass(&self) -> Vec<f64> {
        self.counts[0].iter().zip(&self.counts[1]).map(|(a, b)| a + b).collect()
    }
}

/// Lexicon targets q(s|w) and their weights u(w), aligned with the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub q: Vec<Option<[f64; 3]>>,
    pub u: Vec<f64>,
}

impl Regularizer {
    pub fn new(data: &TrainingData, lexicon: &FusedLexicon) -> Self {
        let q: Vec<Option<[f64; 3]>> = data.vocab.iter().map(|w| lexicon.expectation(w)).collect();
        let mass = data.word_mass();
        let covered: f64 = mass.iter().zip(&q).filter(|(_, q)| q.is_some()).map(|(m, _)| m).sum();
        let u = mass
            .iter()
            .zip(&q)
            .map(|(m, q)| if q.is_some() && covered > 0.0 { m / covered } else { 0.0 })
            .collect();
        Regularizer { q, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// L_main (to be maximized)
    pub main: f64,
    pub kl: f64,
    pub l1: f64,
    /// −main + β·kl + α·l1
    pub total: f64,
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub m: Vec<f64>,
    pub eta: Vec<[[f64; 2]; 3]>,
    pub sent_logits: [[f64; 3]; 2],
}

impl Gradients {
    fn zeros(v: usize) -> Self {
        Gradients {
            m: vec![0.0; v],
            eta: vec![[[0.0; 2]; 3]; v],
            sent_logits: [[0.0; 3]; 2],
        }
    }

    /// Same order as [`ModelParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(7 * self.m.len() + 6);
        out.extend_from_slice(&self.m);
        for e in &self.eta {
            for row in e {
                out.extend_from_slice(row);
            }
        }
        for row in &self.sent_logits {
            out.extend_from_slice(row);
        }
        out
    }
}

/// The loss for fixed data, lexicon and penalty weights.
#[derive(Debug, Clone)]
pub struct Objective {
    pub data: TrainingData,
    pub reg: Regularizer,
    pub alpha: f64,
    pub beta: f64,
}

impl Objective {
    pub fn new(data: TrainingData, lexicon: &FusedLexicon, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be non-negative"));
        }
        let reg = Regularizer::new(&data, lexicon);
        Ok(Objective { data, reg, alpha, beta })
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if params.vocab != self.data.vocab {
            return Err(Error::invalid("parameter vocabulary differs from the training data"));
        }
        Ok(())
    }

    fn main_term(&self, fwd: &Forward) -> f64 {
        let mut total = 0.0;
        for g in 0..2 {
            for (w, c) in self.data.counts[g].iter().enumerate() {
                if *c > 0.0 {
                    total += c * fwd.marginal(w, g).ln();
                }
            }
        }
        total
    }

    fn kl_term(&self, fwd: &Forward) -> f64 {
        let mut total = 0.0;
        for (w, q) in self.reg.q.iter().enumerate() {
            let (Some(q), u) = (q, self.reg.u[w]) else { continue };
            if u == 0.0 {
                continue;
            }
            total += u * kl_divergence(q, &fwd.posterior(w));
        }
        total
    }

    pub fn loss(&self, params: &ModelParams) -> Result<LossParts> {
        self.check(params)?;
        let fwd = Forward::new(params);
        let main = self.main_term(&fwd);
        let kl = if self.beta > 0.0 { self.kl_term(&fwd) } else { 0.0 };
        let l1 = l1_norm(params);
        Ok(LossParts {
            main,
            kl,
            l1,
            total: -main + self.beta * kl + self.alpha * l1,
        })
    }

    /// Unweighted KL term, evaluated regardless of β.
    pub fn kl(&self, params: &ModelParams) -> Result<f64> {
        self.check(params)?;
        Ok(self.kl_term(&Forward::new(params)))
    }

    pub fn loss_and_gradient(&self, params: &ModelParams) -> Result<(LossParts, Gradients)> {
        self.check(params)?;
        let v = params.vocab_size();
        let fwd = Forward::new(params);
        let mut grad = Gradients::zeros(v);
        // ∂loss/∂ℓ_sg[w], laid out like Forward::word
        let mut dlogit = vec![0.0; 6 * v];

        let mut main = 0.0;
        for g in 0..2 {
            let counts = &self.data.counts[g];
            let total_c: f64 = counts.iter().sum();
            let mut resp_sum = [0.0; 3];
            for (w, &c) in counts.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let js = [fwd.joint(w, 0, g), fwd.joint(w, 1, g), fwd.joint(w, 2, g)];
                let pwg = js[0] + js[1] + js[2];
                main += c * pwg.ln();
                for s in 0..3 {
                    let r = c * js[s] / pwg;
                    resp_sum[s] += r;
                    dlogit[(s * 2 + g) * v + w] -= r;
                }
            }
            for s in 0..3 {
                let block = fwd.block(s, g);
                let base = (s * 2 + g) * v;
                for w in 0..v {
                    dlogit[base + w] += block[w] * resp_sum[s];
                }
                grad.sent_logits[g][s] -= resp_sum[s] - fwd.pi[g][s] * total_c;
            }
        }

        let mut kl = 0.0;
        if self.beta > 0.0 {
            let mut a_sum = [[0.0; 2]; 3];
            let mut a_w = vec![[[0.0; 2]; 3]; v];
            for w in 0..v {
                let (Some(q), u) = (self.reg.q[w], self.reg.u[w]) else { continue };
                if u == 0.0 {
                    continue;
                }
                let mut j = [[0.0; 2]; 3];
                let mut js = [0.0; 3];
                for s in 0..3 {
                    for g in 0..2 {
                        j[s][g] = fwd.joint(w, s, g);
                        js[s] += j[s][g];
                    }
                }
                let z: f64 = js.iter().sum();
                let post = [js[0] / z, js[1] / z, js[2] / z];
                kl += u * kl_divergence(&q, &post);
                for s in 0..3 {
                    for g in 0..2 {
                        let a = if js[s] > 0.0 {
                            j[s][g] / z - q[s] * j[s][g] / js[s]
                        } else {
                            0.0
                        };
                        a_w[w][s][g] = u * a;
                        a_sum[s][g] += u * a;
                    }
                }
            }
            for s in 0..3 {
                for g in 0..2 {
                    let block = fwd.block(s, g);
                    let base = (s * 2 + g) * v;
                    for w in 0..v {
                        dlogit[base + w] += self.beta * (a_w[w][s][g] - block[w] * a_sum[s][g]);
                    }
                }
            }
            for g in 0..2 {
                let total_a: f64 = (0..3).map(|s| a_sum[s][g]).sum();
                for s in 0..3 {
                    grad.sent_logits[g][s] += self.beta * (a_sum[s][g] - fwd.pi[g][s] * total_a);
                }
            }
        }

        for s in 0..3 {
            for g in 0..2 {
                let base = (s * 2 + g) * v;
                for w in 0..v {
                    let d = dlogit[base + w];
                    grad.m[w] += d;
                    grad.eta[w][s][g] = d + self.alpha * sign(params.eta[w][s][g]);
                }
            }
        }

        let l1 = l1_norm(params);
        let parts = LossParts {
            main,
            kl,
            l1,
            total: -main + self.beta * kl + self.alpha * l1,
        };
        Ok((parts, grad))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn l1_norm(params: &ModelParams) -> f64 {
    params
        .eta
        .iter()
        .flat_map(|e| e.iter().flat_map(|r| r.iter()))
        .map(|x| x.abs())
        .sum()
}

/// KL(q ‖ p) in nats; zero-probability q components contribute nothing.
pub fn kl_divergence(q: &[f64; 3], p: &[f64; 3]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * (qi / pi).ln())
        .sum()
}

/// L_main for `params` on `data` (to be maximized).
pub fn main_objective(params: &ModelParams, data: &FilteredProbeSet) -> Result<f64> {
    let td = TrainingData::new(data, &params.vocab)?;
    let obj = Objective::new(td, &FusedLexicon::default(), 0.0, 0.0)?;
    Ok(obj.loss(params)?.main)
}

pub fn total_loss(
    params: &ModelParams,
    data: &FilteredProbeSet,
    lexicon: &FusedLexicon,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let td = TrainingData::new(data, &params.vocab)?;
    Ok(Objective::new(td, lexicon, alpha, beta)?.loss(params)?.total)
}

pub fn gradients(
    params: &ModelParams,
    data: &FilteredProbeSet,
    lexicon: &FusedLexicon,
    alpha: f64,
    beta: f64,
) -> Result<Gradients> {
    let td = TrainingData::new(data, &params.vocab)?;
    Ok(Objective::new(td, lexicon, alpha, beta)?.loss_and_gradient(params)?.1)
}
