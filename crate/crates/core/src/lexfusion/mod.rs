//! Sentiment lexicon fusion.
//!
//! Heterogeneous lexica (binary, ternary, continuous, probability triples)
//! are combined into a single Dirichlet(3) per word over (POS, NEG, NEU).
//! The Dirichlet expectation serves as the ground-truth sentiment
//! distribution `q(s|w)` for posterior regularization.

mod variational;

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fold_case;
use crate::vocabfilter::PosLexicon;

pub use variational::{fuse_variational, VariationalConfig, VariationalFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SentimentClass {
    Pos,
    Neg,
    Neu,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 3] = [SentimentClass::Pos, SentimentClass::Neg, SentimentClass::Neu];

    pub fn index(self) -> usize {
        match self {
            SentimentClass::Pos => 0,
            SentimentClass::Neg => 1,
            SentimentClass::Neu => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Pos => "pos",
            SentimentClass::Neg => "neg",
            SentimentClass::Neu => "neu",
        }
    }
}

impl fmt::Display for SentimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pos" | "positive" => Ok(SentimentClass::Pos),
            "neg" | "negative" => Ok(SentimentClass::Neg),
            "neu" | "neutral" => Ok(SentimentClass::Neu),
            _ => Err(Error::invalid(format!("unknown sentiment {s:?}"))),
        }
    }
}

/// Argmax over a (POS, NEG, NEU) triple; exact ties resolve NEU > POS > NEG.
pub fn argmax_sentiment(v: &[f64; 3]) -> SentimentClass {
    let order = [SentimentClass::Neu, SentimentClass::Pos, SentimentClass::Neg];
    let mut best = order[0];
    for &c in &order[1..] {
        if v[c.index()] > v[best.index()] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// +1 / -1
    Binary,
    /// +1 / 0 / -1
    Ternary,
    /// a real in [-1, 1]
    Continuous,
    /// (pos, neg, neu) probabilities
    ProbabilityTriple,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Binary => "binary",
            Scale::Ternary => "ternary",
            Scale::Continuous => "continuous",
            Scale::ProbabilityTriple => "probability_triple",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Scale::Binary),
            "ternary" => Ok(Scale::Ternary),
            "continuous" => Ok(Scale::Continuous),
            "probability_triple" | "triple" => Ok(Scale::ProbabilityTriple),
            _ => Err(Error::invalid(format!("unknown lexicon scale {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawScore {
    Scalar(f64),
    Triple([f64; 3]),
}

impl RawScore {
    /// Pseudo-count triple on (POS, NEG, NEU).
    pub fn pseudo_counts(&self, scale: Scale) -> [f64; 3] {
        match (*self, scale) {
            (RawScore::Triple(t), _) => t,
            (RawScore::Scalar(c), Scale::Continuous) => [c.max(0.0), (-c).max(0.0), 1.0 - c.abs()],
            (RawScore::Scalar(c), _) => {
                if c > 0.0 {
                    [1.0, 0.0, 0.0]
                } else if c < 0.0 {
                    [0.0, 1.0, 0.0]
                } else {
                    [0.0, 0.0, 1.0]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLexicon {
    pub name: String,
    pub language: String,
    pub scale: Scale,
    pub entries: BTreeMap<String, RawScore>,
}

impl RawLexicon {
    /// Maps inflected forms to treebank lemmas. When several forms collapse
    /// onto one lemma, the entry spelled as the lemma itself wins, otherwise
    /// the lexicographically first form.
    pub fn lemmatize(&self, pos: &PosLexicon) -> RawLexicon {
        let mut entries: BTreeMap<String, RawScore> = BTreeMap::new();
        let mut exact: BTreeMap<String, bool> = BTreeMap::new();
        for (word, score) in &self.entries {
            let lemma = pos
                .lookup(word)
                .map(|e| e.lemma.clone())
                .unwrap_or_else(|| word.clone());
            let is_exact = &lemma == word;
            match exact.get(&lemma) {
                None => {
                    exact.insert(lemma.clone(), is_exact);
                    entries.insert(lemma, *score);
                }
                Some(false) if is_exact => {
                    exact.insert(lemma.clone(), true);
                    entries.insert(lemma, *score);
                }
                _ => {}
            }
        }
        RawLexicon {
            entries,
            ..self.clone()
        }
    }
}

fn check_scale(name: &str, word: &str, scale: Scale, score: &RawScore) -> Result<()> {
    let bad = |value: f64| Error::OutOfScale {
        lexicon: name.to_string(),
        word: word.to_string(),
        value,
        scale: scale.to_string(),
    };
    match (scale, score) {
        (Scale::Binary, RawScore::Scalar(v)) if *v == 1.0 || *v == -1.0 => Ok(()),
        (Scale::Ternary, RawScore::Scalar(v)) if *v == 1.0 || *v == -1.0 || *v == 0.0 => Ok(()),
        (Scale::Continuous, RawScore::Scalar(v)) if v.is_finite() && v.abs() <= 1.0 => Ok(()),
        (Scale::ProbabilityTriple, RawScore::Triple(t)) => {
            if let Some(v) = t.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
                return Err(bad(*v));
            }
            let sum: f64 = t.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(bad(sum));
            }
            Ok(())
        }
        (_, RawScore::Scalar(v)) => Err(bad(*v)),
        (_, RawScore::Triple(t)) => Err(bad(t[0])),
    }
}

/// Parses a TSV lexicon: `word<TAB>score`, or `word<TAB>pos<TAB>neg<TAB>neu`
/// for probability triples. Blank lines and `#` comments are skipped.
pub fn parse_lexicon<R: BufRead>(reader: R, name: &str, language: &str, scale: Scale) -> Result<RawLexicon> {
    let mut entries = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad score {s:?}: {e}"),
            })
        };
        let score = match (scale, cols.len()) {
            (Scale::ProbabilityTriple, 4) => RawScore::Triple([num(cols[1])?, num(cols[2])?, num(cols[3])?]),
            (Scale::ProbabilityTriple, n) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("probability-triple lexicon needs 4 columns, got {n}"),
                })
            }
            (_, 2) => RawScore::Scalar(num(cols[1])?),
            (_, n) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 2 columns, got {n}"),
                })
            }
        };
        let word = fold_case(language, cols[0].trim());
        check_scale(name, &word, scale, &score)?;
        entries.insert(word, score);
    }
    Ok(RawLexicon {
        name: name.to_string(),
        language: language.to_string(),
        scale,
        entries,
    })
}

pub fn ingest_lexicon(path: &Path, language: &str, scale: Scale) -> Result<RawLexicon> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_lexicon(std::io::BufReader::new(file), &name, language, scale)
}

/// Per-word Dirichlet concentrations (α_pos, α_neg, α_neu).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FusedLexicon {
    pub entries: BTreeMap<String, [f64; 3]>,
}

impl FusedLexicon {
    pub fn get(&self, word: &str) -> Option<&[f64; 3]> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Dirichlet mean, i.e. `q(s|w)`.
    pub fn expectation(&self, word: &str) -> Option<[f64; 3]> {
        self.entries.get(word).map(dirichlet_mean)
    }

    pub fn argmax(&self, word: &str) -> Option<SentimentClass> {
        self.expectation(word).map(|e| argmax_sentiment(&e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let lex: FusedLexicon = serde_json::from_str(s)?;
        if let Some((w, _)) = lex
            .entries
            .iter()
            .find(|(_, a)| a.iter().any(|v| !v.is_finite() || *v <= 0.0))
        {
            return Err(Error::invalid(format!("non-positive concentration for {w:?}")));
        }
        Ok(lex)
    }
}

pub fn dirichlet_mean(alpha: &[f64; 3]) -> [f64; 3] {
    let total: f64 = alpha.iter().sum();
    [alpha[0] / total, alpha[1] / total, alpha[2] / total]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionStrategy {
    #[default]
    Pooled,
    Variational,
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pooled" => Ok(FusionStrategy::Pooled),
            "variational" => Ok(FusionStrategy::Variational),
            _ => Err(Error::invalid(format!("unknown fusion strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub view_weight: f64,
    pub base_prior: [f64; 3],
    pub variational: VariationalConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            view_weight: 1.0,
            base_prior: [1.0, 1.0, 1.0],
            variational: VariationalConfig::default(),
        }
    }
}

/// Per-word list of pseudo-count triples, one per view that scores the word.
pub(crate) fn view_observations(views: &[RawLexicon]) -> BTreeMap<String, Vec<(usize, [f64; 3])>> {
    let mut obs: BTreeMap<String, Vec<(usize, [f64; 3])>> = BTreeMap::new();
    for (v, view) in views.iter().enumerate() {
        for (word, score) in &view.entries {
            obs.entry(word.clone())
                .or_default()
                .push((v, score.pseudo_counts(view.scale)));
        }
    }
    obs
}

pub fn fuse(views: &[RawLexicon], strategy: FusionStrategy, config: &FusionConfig) -> Result<FusedLexicon> {
    if views.is_empty() {
        return Err(Error::invalid("fusion needs at least one lexicon view"));
    }
    if config.base_prior.iter().any(|p| !(*p > 0.0)) || !(config.view_weight >= 0.0) {
        return Err(Error::invalid("base prior must be positive and view weight non-negative"));
    }
    match strategy {
        FusionStrategy::Pooled => Ok(fuse_pooled(views, config)),
        FusionStrategy::Variational => Ok(fuse_variational(views, config)?.lexicon),
    }
}

/// α_w = base prior + view_weight · Σ_views pseudo-counts.
fn fuse_pooled(views: &[RawLexicon], config: &FusionConfig) -> FusedLexicon {
    let entries = view_observations(views)
        .into_iter()
        .map(|(word, obs)| {
            let mut counts: Vec<[f64; 3]> = obs.into_iter().map(|(_, c)| c).collect();
            // order-independent summation, so view order never changes a bit
            counts.sort_by(|a, b| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut alpha = config.base_prior;
            let mut sum = [0.0; 3];
            for c in &counts {
                for k in 0..3 {
                    sum[k] += c[k];
                }
            }
            for k in 0..3 {
                alpha[k] += config.view_weight * sum[k];
            }
            (word, alpha)
        })
        .collect();
    FusedLexicon { entries }
}

pub fn classify_text<S: AsRef<str>>(lex: &FusedLexicon, tokens: &[S]) -> SentimentClass {
    let mut found: Vec<[f64; 3]> = tokens
        .iter()
        .filter_map(|t| lex.expectation(t.as_ref()))
        .collect();
    if found.is_empty() {
        return SentimentClass::Neu;
    }
    found.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = found.len() as f64;
    let mut mean = [0.0; 3];
    for e in &found {
        for k in 0..3 {
            mean[k] += e[k];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    argmax_sentiment(&mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Classes absent from both gold labels and predictions; their F1 counts as 0.
    pub absent_classes: Vec<SentimentClass>,
    pub per_class_f1: [f64; 3],
}

/// Macro-F1 and accuracy from (gold, predicted) pairs.
pub fn score_predictions(pairs: &[(SentimentClass, SentimentClass)]) -> Result<ClassificationScores> {
    if pairs.is_empty() {
        return Err(Error::invalid("evaluation corpus is empty"));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (gold, pred) in pairs {
        confusion[gold.index()][pred.index()] += 1;
    }
    let correct: usize = (0..3).map(|k| confusion[k][k]).sum();
    let mut per_class_f1 = [0.0; 3];
    let mut absent_classes = Vec::new();
    for k in 0..3 {
        let tp = confusion[k][k] as f64;
        let gold_k: usize = confusion[k].iter().sum();
        let pred_k: usize = (0..3).map(|g| confusion[g][k]).sum();
        if gold_k == 0 && pred_k == 0 {
            absent_classes.push(SentimentClass::from_index(k));
            continue;
        }
        // F1 = 2TP / (2TP + FP + FN)
        per_class_f1[k] = 2.0 * tp / (gold_k + pred_k) as f64;
    }
    Ok(ClassificationScores {
        macro_f1: per_class_f1.iter().sum::<f64>() / 3.0,
        accuracy: correct as f64 / pairs.len() as f64,
        absent_classes,
        per_class_f1,
    })
}

pub fn evaluate_lexicon<S: AsRef<str>>(
    lex: &FusedLexicon,
    corpus: &[(Vec<S>, SentimentClass)],
) -> Result<ClassificationScores> {
    let pairs: Vec<_> = corpus
        .iter()
        .map(|(tokens, gold)| (*gold, classify_text(lex, tokens)))
        .collect();
    score_predictions(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentClass::*;

    fn binary(name: &str, words: &[(&str, f64)]) -> RawLexicon {
        RawLexicon {
            name: name.into(),
            language: "en".into(),
            scale: Scale::Binary,
            entries: words
                .iter()
                .map(|(w, s)| (w.to_string(), RawScore::Scalar(*s)))
                .collect(),
        }
    }

    fn lex_with(words: &[(&str, [f64; 3])]) -> FusedLexicon {
        FusedLexicon {
            entries: words.iter().map(|(w, a)| (w.to_string(), *a)).collect(),
        }
    }

    #[test]
    fn ingest_binary_tsv() {
        let lex = parse_lexicon("good\t+1\n# c\nBad\t-1\n".as_bytes(), "b", "en", Scale::Binary).unwrap();
        assert_eq!(lex.entries["good"], RawScore::Scalar(1.0));
        assert_eq!(lex.entries["bad"], RawScore::Scalar(-1.0));
    }

    #[test]
    fn continuous_out_of_scale() {
        let err = parse_lexicon("good\t1.7\n".as_bytes(), "c", "en", Scale::Continuous).unwrap_err();
        match err {
            Error::OutOfScale { word, value, .. } => {
                assert_eq!(word, "good");
                assert_eq!(value, 1.7);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn binary_rejects_zero() {
        assert!(parse_lexicon("meh\t0\n".as_bytes(), "b", "en", Scale::Binary).is_err());
        assert!(parse_lexicon("meh\t0\n".as_bytes(), "t", "en", Scale::Ternary).is_ok());
    }

    #[test]
    fn triple_stored_as_is() {
        let lex = parse_lexicon(
            "good\t0.7\t0.1\t0.2\n".as_bytes(),
            "p",
            "en",
            Scale::ProbabilityTriple,
        )
        .unwrap();
        assert_eq!(lex.entries["good"], RawScore::Triple([0.7, 0.1, 0.2]));
    }

    #[test]
    fn pooled_single_binary_view() {
        let fused = fuse(&[binary("a", &[("good", 1.0)])], FusionStrategy::Pooled, &FusionConfig::default()).unwrap();
        assert_eq!(fused.entries["good"], [2.0, 1.0, 1.0]);
        assert_eq!(fused.expectation("good").unwrap(), [0.5, 0.25, 0.25]);
        assert!(!fused.contains("bad"));
    }

    #[test]
    fn continuous_pseudo_counts() {
        assert_eq!(RawScore::Scalar(0.5).pseudo_counts(Scale::Continuous), [0.5, 0.0, 0.5]);
        assert_eq!(RawScore::Scalar(-0.25).pseudo_counts(Scale::Continuous), [0.0, 0.25, 0.75]);
        assert_eq!(RawScore::Scalar(0.0).pseudo_counts(Scale::Ternary), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn agreeing_views_increase_pos() {
        let cfg = FusionConfig::default();
        let one = fuse(&[binary("a", &[("good", 1.0)])], FusionStrategy::Pooled, &cfg).unwrap();
        let two = fuse(
            &[binary("a", &[("good", 1.0)]), binary("b", &[("good", 1.0)])],
            FusionStrategy::Pooled,
            &cfg,
        )
        .unwrap();
        assert!(two.entries["good"][0] > one.entries["good"][0]);
        assert!(two.expectation("good").unwrap()[0] > one.expectation("good").unwrap()[0]);
    }

    #[test]
    fn empty_view_list() {
        assert!(fuse(&[], FusionStrategy::Pooled, &FusionConfig::default()).is_err());
    }

    #[test]
    fn classify_cases() {
        let lex = lex_with(&[("a", [8.0, 1.0, 1.0]), ("b", [6.0, 2.0, 2.0]), ("c", [1.0, 7.0, 2.0])]);
        assert_eq!(classify_text(&lex, &["a", "a"]), Pos);
        assert_eq!(classify_text(&lex, &["zzz"]), Neu);
        let empty: [&str; 0] = [];
        assert_eq!(classify_text(&lex, &empty), Neu);
        // (0.6,0.2,0.2) and (0.1,0.7,0.2) average to (0.35,0.45,0.2)
        assert_eq!(classify_text(&lex, &["b", "c"]), Neg);
        assert_eq!(classify_text(&lex, &["c", "b"]), Neg);
    }

    #[test]
    fn tie_break_order() {
        assert_eq!(argmax_sentiment(&[0.4, 0.4, 0.2]), Pos);
        assert_eq!(argmax_sentiment(&[0.4, 0.2, 0.4]), Neu);
        assert_eq!(argmax_sentiment(&[0.2, 0.4, 0.4]), Neu);
        assert_eq!(argmax_sentiment(&[0.2, 0.6, 0.2]), Neg);
    }

    #[test]
    fn perfect_predictions() {
        let pairs = [(Pos, Pos), (Neg, Neg), (Neu, Neu), (Pos, Pos)];
        let s = score_predictions(&pairs).unwrap();
        assert_eq!(s.macro_f1, 1.0);
        assert_eq!(s.accuracy, 1.0);
    }

    #[test]
    fn all_neutral_on_polar_gold() {
        let lex = FusedLexicon::default();
        let corpus = vec![(vec!["x"], Pos), (vec!["y"], Neg)];
        let s = evaluate_lexicon(&lex, &corpus).unwrap();
        assert_eq!(s.accuracy, 0.0);
        assert_eq!(s.macro_f1, 0.0);
    }

    #[test]
    fn six_instance_confusion() {
        // gold POS POS NEG NEG NEU NEU / pred POS NEG NEG NEG NEU POS
        // POS: tp1 fp1 fn1 -> 0.5; NEG: tp2 fp1 fn0 -> 0.8; NEU: tp1 fp0 fn1 -> 2/3
        let pairs = [(Pos, Pos), (Pos, Neg), (Neg, Neg), (Neg, Neg), (Neu, Neu), (Neu, Pos)];
        let s = score_predictions(&pairs).unwrap();
        assert!((s.accuracy - 0.667).abs() < 1e-3);
        let expected = (0.5 + 0.8 + 2.0 / 3.0) / 3.0;
        assert!((s.macro_f1 - expected).abs() < 1e-12);
        assert!(s.absent_classes.is_empty());
    }

    #[test]
    fn absent_class_flagged() {
        let s = score_predictions(&[(Pos, Pos), (Neg, Neg)]).unwrap();
        assert_eq!(s.absent_classes, vec![Neu]);
        assert!((s.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lemmatize_prefers_exact_lemma() {
        use crate::vocabfilter::{build_pos_lexicon, TreebankToken};
        let pos = build_pos_lexicon(
            vec![
                TreebankToken::new("belle", "beau", "ADJ"),
                TreebankToken::new("beau", "beau", "ADJ"),
            ],
            "fr",
        );
        let mut raw = binary("x", &[("belle", -1.0), ("beau", 1.0)]);
        raw.language = "fr".into();
        let l = raw.lemmatize(&pos);
        assert_eq!(l.entries.len(), 1);
        assert_eq!(l.entries["beau"], RawScore::Scalar(1.0));
    }

    #[test]
    fn json_round_trip() {
        let lex = lex_with(&[("good", [2.0, 1.0, 1.0])]);
        let back = FusedLexicon::from_json(&lex.to_json().unwrap()).unwrap();
        assert_eq!(back, lex);
        assert!(FusedLexicon::from_json(r#"{"bad":[0.0,1.0,1.0]}"#).is_err());
    }
}
