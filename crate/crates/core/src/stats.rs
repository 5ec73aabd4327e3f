//! Downstream statistics over deviation rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::corpus::GenderClass;
use crate::error::{Error, Result};
use crate::lexfusion::{FusedLexicon, SentimentClass};
use crate::lvm::DeviationRanking;
use crate::pmi::csv_field;

/// Significance level before multiple-comparison correction.
pub const SIGNIFICANCE: f64 = 0.05;

pub const UNKNOWN_SUPERSENSE: &str = "UNKNOWN";

/// Fraction of ranked lemmas whose most likely lexicon sentiment is
/// `sentiment`. Lemmas missing from the lexicon are left out of the
/// denominator; `None` when no ranked lemma is covered.
pub fn sentiment_frequency(ranking: &DeviationRanking, lexicon: &FusedLexicon, sentiment: SentimentClass) -> Option<f64> {
    sentiment_profile(ranking, lexicon).map(|p| p[sentiment.index()])
}

/// Frequencies of (POS, NEG, NEU) among covered ranked lemmas.
pub fn sentiment_profile(ranking: &DeviationRanking, lexicon: &FusedLexicon) -> Option<[f64; 3]> {
    let mut counts = [0usize; 3];
    for lemma in ranking.lemmas() {
        if let Some(c) = lexicon.argmax(lemma) {
            counts[c.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let n = total as f64;
    Some([counts[0] as f64 / n, counts[1] as f64 / n, counts[2] as f64 / n])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("welch test needs at least two values per group"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid("welch test input contains non-finite values"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult { t, df, p: two_sided_t(t, df) })
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// flag_i = p_i < 0.05 / m
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<bool>> {
    if m == 0 {
        return Err(Error::invalid("number of comparisons must be at least 1"));
    }
    let threshold = SIGNIFICANCE / m as f64;
    Ok(p_values.iter().map(|p| *p < threshold).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: f64,
    pub factors: BTreeMap<String, String>,
    pub gender: GenderClass,
    pub sentiment: SentimentClass,
}

impl Observation {
    pub fn new(value: f64, factors: BTreeMap<String, String>, gender: GenderClass, sentiment: SentimentClass) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("observation value {value} outside [0, 1]")));
        }
        Ok(Observation {
            value,
            factors,
            gender,
            sentiment,
        })
    }
}

/// Treatment-coded design matrix: intercept, then one dummy column per
/// non-reference level of each factor, in factor order and level order.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub terms: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub response: DVector<f64>,
    pub reference_levels: BTreeMap<String, String>,
}

pub fn design_matrix(obs: &[Observation], factors: &[String], reference_levels: &BTreeMap<String, String>) -> Result<Design> {
    if obs.is_empty() {
        return Err(Error::invalid("no observations"));
    }
    let mut terms = vec!["Intercept".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; obs.len()]];
    let mut refs = BTreeMap::new();
    for factor in factors {
        let mut levels = BTreeSet::new();
        for (i, o) in obs.iter().enumerate() {
            let level = o
                .factors
                .get(factor)
                .ok_or_else(|| Error::invalid(format!("observation {i} lacks factor {factor:?}")))?;
            levels.insert(level.clone());
        }
        if levels.len() < 2 {
            return Err(Error::invalid(format!("factor {factor:?} has fewer than two levels")));
        }
        let reference = match reference_levels.get(factor) {
            Some(r) if levels.contains(r) => r.clone(),
            Some(r) => return Err(Error::invalid(format!("reference level {r:?} not observed for {factor:?}"))),
            None => levels.iter().next().cloned().expect("non-empty"),
        };
        for level in levels.iter().filter(|l| **l != reference) {
            terms.push(format!("{factor}[{level}]"));
            columns.push(obs.iter().map(|o| if &o.factors[factor] == level { 1.0 } else { 0.0 }).collect());
        }
        refs.insert(factor.clone(), reference);
    }
    let n = obs.len();
    let matrix = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
    let response = DVector::from_iterator(n, obs.iter().map(|o| o.value));
    Ok(Design {
        terms,
        matrix,
        response,
        reference_levels: refs,
    })
}

/// Columns that are (numerically) linear combinations of earlier columns.
fn aliased_terms(design: &Design) -> Vec<String> {
    let x = &design.matrix;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut aliased = Vec::new();
    for c in 0..x.ncols() {
        let col = x.column(c).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        // re-orthogonalize once for stability
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-10 * norm {
            aliased.push(design.terms[c].clone());
        } else {
            basis.push(r / rn);
        }
    }
    aliased
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_err: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub coefficients: Vec<Coefficient>,
    pub f_statistic: f64,
    /// Overall F-test p-value.
    pub model_p: f64,
    pub residual_df: usize,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    pub reference_levels: BTreeMap<String, String>,
}

impl AnovaResult {
    pub fn get(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

/// Main-effects OLS with treatment coding, per-coefficient t-tests and an
/// overall F-test.
pub fn anova_ols(obs: &[Observation], factors: &[String], reference_levels: &BTreeMap<String, String>) -> Result<AnovaResult> {
    if factors.is_empty() {
        return Err(Error::invalid("at least one factor is required"));
    }
    if let Some(o) = obs.iter().find(|o| !(0.0..=1.0).contains(&o.value)) {
        return Err(Error::invalid(format!("observation value {} outside [0, 1]", o.value)));
    }
    let design = design_matrix(obs, factors, reference_levels)?;
    let aliased = aliased_terms(&design);
    if !aliased.is_empty() {
        return Err(Error::RankDeficient(aliased));
    }
    let (n, p) = design.matrix.shape();
    if n <= p {
        return Err(Error::invalid(format!("{n} observations leave no residual degrees of freedom for {p} terms")));
    }
    let x = &design.matrix;
    let y = &design.response;
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let solve = |rhs: &DVector<f64>| {
        r.solve_upper_triangular(&(q.transpose() * rhs))
            .ok_or_else(|| Error::RankDeficient(design.terms.clone()))
    };
    let mut beta = solve(y)?;
    // one step of iterative refinement
    beta += solve(&(y - x * &beta))?;
    let residuals = y - x * &beta;
    let rss = residuals.norm_squared();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(design.terms.clone()))?;
    let cov_diag: Vec<f64> = (0..p).map(|i| r_inv.row(i).norm_squared() * sigma2).collect();

    let coefficients = (0..p)
        .map(|i| {
            let estimate = beta[i];
            let std_err = cov_diag[i].sqrt();
            let (t, pv) = if std_err > 0.0 {
                let t = estimate / std_err;
                (t, two_sided_t(t, df as f64))
            } else if estimate == 0.0 {
                (0.0, 1.0)
            } else {
                (estimate.signum() * f64::INFINITY, 0.0)
            };
            Coefficient {
                term: design.terms[i].clone(),
                estimate,
                std_err,
                t,
                p: pv,
            }
        })
        .collect();

    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ess = (tss - rss).max(0.0);
    let df_model = (p - 1) as f64;
    let (f_statistic, model_p) = if rss > 0.0 {
        let f = (ess / df_model) / sigma2;
        let dist = FisherSnedecor::new(df_model, df as f64).expect("positive degrees of freedom");
        (f, dist.sf(f).clamp(0.0, 1.0))
    } else if ess > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(AnovaResult {
        coefficients,
        f_statistic,
        model_p,
        residual_df: df,
        r_squared: if tss > 0.0 { ess / tss } else { 0.0 },
        residuals: residuals.iter().copied().collect(),
        reference_levels: design.reference_levels,
    })
}

/// Coefficient table in the layout intercept, factor rows, then a closing
/// `P-value` row with the overall F-test. Coefficients with p < 0.05 are
/// marked significant.
pub fn anova_csv(result: &AnovaResult) -> String {
    let mut out = String::from("term,estimate,std_err,t,p,significant\n");
    for c in &result.coefficients {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{}",
            csv_field(&c.term),
            c.estimate,
            c.std_err,
            c.t,
            c.p,
            c.p < SIGNIFICANCE
        );
    }
    let _ = writeln!(out, "P-value,{:?},,,,{}", result.model_p, result.model_p < SIGNIFICANCE);
    out
}

/// Fraction of ranked lemmas per supersense class; unmapped lemmas count
/// as `UNKNOWN`.
pub fn supersense_frequency(ranking: &DeviationRanking, supersense_map: &BTreeMap<String, String>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for lemma in ranking.lemmas() {
        let class = supersense_map
            .get(lemma)
            .cloned()
            .unwrap_or_else(|| UNKNOWN_SUPERSENSE.to_string());
        *counts.entry(class).or_insert(0) += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(c, k)| (c, k as f64 / total as f64))
        .collect()
}

/// TSV `lemma<TAB>class`; blank lines and `#` comments are skipped.
pub fn parse_supersense_map<R: BufRead>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next()) {
            (Some(lemma), Some(class)) if !lemma.is_empty() && !class.trim().is_empty() => {
                out.insert(lemma.to_string(), class.trim().to_string());
            }
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "expected lemma<TAB>class".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn read_supersense_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_supersense_map(std::io::BufReader::new(file))
}
