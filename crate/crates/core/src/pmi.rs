//! Pointwise mutual information between entity gender and generated lemmas.
//!
//! PMI(g, w) = log2 p(g, w) / (p(g) p(w)), with probabilities estimated
//! from a bag-of-words count table and optional add-k smoothing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::GenderClass;
use crate::error::{Error, Result};
use crate::vocabfilter::FilteredProbeSet;

/// How each (entity, lemma) occurrence contributes to the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// One count per occurrence.
    #[default]
    Unit,
    /// The lemma's probability mass for that entity.
    Prob,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unit" => Ok(Weighting::Unit),
            "prob" => Ok(Weighting::Prob),
            _ => Err(Error::invalid(format!("unknown weighting {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTable {
    pub counts: BTreeMap<(GenderClass, String), f64>,
    pub gender_totals: BTreeMap<GenderClass, f64>,
    pub word_totals: BTreeMap<String, f64>,
    pub grand_total: f64,
}

impl CountTable {
    pub fn from_cells<I, S>(cells: I) -> Self
    where
        I: IntoIterator<Item = (GenderClass, S, f64)>,
        S: Into<String>,
    {
        let mut t = CountTable::default();
        for (g, w, c) in cells {
            *t.counts.entry((g, w.into())).or_insert(0.0) += c;
        }
        t.recompute_marginals();
        t
    }

    fn recompute_marginals(&mut self) {
        self.gender_totals.clear();
        self.word_totals.clear();
        self.grand_total = 0.0;
        for ((g, w), c) in &self.counts {
            *self.gender_totals.entry(*g).or_insert(0.0) += c;
            *self.word_totals.entry(w.clone()).or_insert(0.0) += c;
            self.grand_total += c;
        }
    }

    pub fn get(&self, g: GenderClass, w: &str) -> f64 {
        self.counts.get(&(g, w.to_string())).copied().unwrap_or(0.0)
    }

    /// Drops words whose total count is below `min_count`.
    pub fn prune(&self, min_count: f64) -> CountTable {
        let mut t = CountTable {
            counts: self
                .counts
                .iter()
                .filter(|((_, w), _)| self.word_totals.get(w).copied().unwrap_or(0.0) >= min_count)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            ..CountTable::default()
        };
        t.recompute_marginals();
        t
    }
}

pub fn cooccurrence_counts(data: &FilteredProbeSet, weighting: Weighting) -> Result<CountTable> {
    if data.is_empty() {
        return Err(Error::invalid("no entities to count"));
    }
    let cells = data.entities.iter().flat_map(|e| {
        e.lemmas.iter().map(move |(lemma, p)| {
            let c = match weighting {
                Weighting::Unit => 1.0,
                Weighting::Prob => *p,
            };
            (e.gender, lemma.clone(), c)
        })
    });
    Ok(CountTable::from_cells(cells))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmiTable {
    /// Genders on the grid, in enum order.
    pub genders: Vec<GenderClass>,
    pub words: Vec<String>,
    /// Missing cells (zero count with k = 0) are omitted.
    pub values: BTreeMap<(GenderClass, String), f64>,
    pub smoothing_k: f64,
}

impl PmiTable {
    pub fn get(&self, g: GenderClass, w: &str) -> Option<f64> {
        self.values.get(&(g, w.to_string())).copied()
    }
}

/// Add-k smoothed PMI over the grid of genders and words present in the table.
pub fn compute_pmi(table: &CountTable, smoothing_k: f64) -> Result<PmiTable> {
    if !(smoothing_k >= 0.0) || !smoothing_k.is_finite() {
        return Err(Error::invalid("smoothing k must be a finite non-negative number"));
    }
    if !(table.grand_total > 0.0) {
        return Err(Error::invalid("count table is empty"));
    }
    let genders: Vec<GenderClass> = table.gender_totals.keys().copied().collect();
    let words: Vec<String> = table.word_totals.keys().cloned().collect();
    let cells = (genders.len() * words.len()) as f64;
    let total = table.grand_total + smoothing_k * cells;
    let n_words = words.len() as f64;
    let n_genders = genders.len() as f64;

    let p_g: BTreeMap<GenderClass, f64> = genders
        .iter()
        .map(|g| (*g, (table.gender_totals[g] + smoothing_k * n_words) / total))
        .collect();
    let p_w: BTreeMap<&str, f64> = words
        .iter()
        .map(|w| (w.as_str(), (table.word_totals[w] + smoothing_k * n_genders) / total))
        .collect();

    let mut values = BTreeMap::new();
    for g in &genders {
        for w in &words {
            let joint = (table.get(*g, w) + smoothing_k) / total;
            if joint > 0.0 {
                values.insert((*g, w.clone()), (joint / (p_g[g] * p_w[w.as_str()])).log2());
            }
        }
    }
    Ok(PmiTable {
        genders,
        words,
        values,
        smoothing_k,
    })
}

/// CSV with one PMI column and one raw-count column per gender class.
///
/// Missing PMI cells are left empty.
pub fn pmi_csv(pmi: &PmiTable, counts: &CountTable) -> String {
    let mut out = String::from("word");
    for g in GenderClass::ALL {
        let _ = write!(out, ",pmi_{g}");
    }
    for g in GenderClass::ALL {
        let _ = write!(out, ",count_{g}");
    }
    out.push('\n');
    for w in &pmi.words {
        out.push_str(&csv_field(w));
        for g in GenderClass::ALL {
            match pmi.get(g, w) {
                Some(v) => {
                    let _ = write!(out, ",{v:?}");
                }
                None => out.push(','),
            }
        }
        for g in GenderClass::ALL {
            let _ = write!(out, ",{}", counts.get(g, w));
        }
        out.push('\n');
    }
    out.push_str(&format!("# log base 2, add-k smoothing k={}\n", pmi.smoothing_k));
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
