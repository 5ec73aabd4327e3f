//! Distributions implied by a parameter set.
//!
//! Joint: p(w, s, g) = p(w | s, g) p(s | g) p(g).

use crate::lexfusion::SentimentClass;
use crate::util::{softmax, softmax_in_place};

use super::params::{Gender, ModelParams};

/// All conditionals of one parameter set, evaluated once.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub v: usize,
    pub prior: [f64; 2],
    /// π[g][s] = p(s | g)
    pub pi: [[f64; 3]; 2],
    /// word[(s * 2 + g) * v + w] = p(w | s, g)
    pub word: Vec<f64>,
}

impl Forward {
    pub fn new(params: &ModelParams) -> Self {
        let v = params.vocab_size();
        let mut pi = [[0.0; 3]; 2];
        for g in 0..2 {
            let sm = softmax(&params.sent_logits[g]);
            pi[g].copy_from_slice(&sm);
        }
        let mut word = vec![0.0; 6 * v];
        for s in 0..3 {
            for g in 0..2 {
                let block = &mut word[(s * 2 + g) * v..(s * 2 + g + 1) * v];
                for (w, x) in block.iter_mut().enumerate() {
                    *x = params.m[w] + params.eta[w][s][g];
                }
                softmax_in_place(block);
            }
        }
        Forward {
            v,
            prior: params.gender_prior,
            pi,
            word,
        }
    }

    #[inline]
    pub fn p_word(&self, s: usize, g: usize, w: usize) -> f64 {
        self.word[(s * 2 + g) * self.v + w]
    }

    pub fn block(&self, s: usize, g: usize) -> &[f64] {
        &self.word[(s * 2 + g) * self.v..(s * 2 + g + 1) * self.v]
    }

    /// p(w, s, g)
    #[inline]
    pub fn joint(&self, w: usize, s: usize, g: usize) -> f64 {
        self.prior[g] * self.pi[g][s] * self.p_word(s, g, w)
    }

    /// p(w, g) = Σ_s p(w, s, g)
    pub fn marginal(&self, w: usize, g: usize) -> f64 {
        (0..3).map(|s| self.joint(w, s, g)).sum()
    }

    /// p(s | w)
    pub fn posterior(&self, w: usize) -> [f64; 3] {
        let mut js = [0.0; 3];
        for (s, j) in js.iter_mut().enumerate() {
            *j = (0..2).map(|g| self.joint(w, s, g)).sum();
        }
        let z: f64 = js.iter().sum();
        [js[0] / z, js[1] / z, js[2] / z]
    }
}

/// p(w | s, g) over the vocabulary.
pub fn word_dist(params: &ModelParams, s: SentimentClass, g: Gender) -> Vec<f64> {
    let logits: Vec<f64> = params
        .m
        .iter()
        .zip(&params.eta)
        .map(|(m, e)| m + e[s.index()][g.index()])
        .collect();
    softmax(&logits)
}

/// p(s | g)
pub fn sentiment_prior(params: &ModelParams, g: Gender) -> [f64; 3] {
    let sm = softmax(&params.sent_logits[g.index()]);
    [sm[0], sm[1], sm[2]]
}

/// p(w, g) with the sentiment marginalized out.
pub fn marginal_word_gender(params: &ModelParams, w: usize, g: Gender) -> f64 {
    Forward::new(params).marginal(w, g.index())
}

/// p(s | w) = Σ_g p(w, s, g) / Σ_{s', g} p(w, s', g)
pub fn posterior_sentiment(params: &ModelParams, w: usize) -> [f64; 3] {
    Forward::new(params).posterior(w)
}

/// p(s | w) for every vocabulary word.
pub fn posterior_sentiment_all(params: &ModelParams) -> Vec<[f64; 3]> {
    let fwd = Forward::new(params);
    (0..params.vocab_size()).map(|w| fwd.posterior(w)).collect()
}
