//! Python bindings for the stanceprobe pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use stanceprobe::config::Config;
use stanceprobe::corpus::{read_probe_set, SlotMode};
use stanceprobe::lexfusion::{self, FusionConfig, FusionStrategy, Scale};
use stanceprobe::lvm::{self, Averaging, TrainConfig, ALPHA_GRID, BETA_GRID};
use stanceprobe::pmi::{self, Weighting};
use stanceprobe::stats::{self, Observation};
use stanceprobe::vocabfilter::{build_pos_lexicon, filter_probe_with, read_conllu, PosClass};
use stanceprobe::{pipeline, GenderClass, SentimentClass};

fn to_py(e: stanceprobe::Error) -> PyErr {
    match e {
        stanceprobe::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = stanceprobe::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

#[pyclass(name = "ProbeSet", frozen)]
struct PyProbeSet {
    inner: stanceprobe::ProbeSet,
}

#[pymethods]
impl PyProbeSet {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyProbeSet {
            inner: read_probe_set(&path).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn models(&self) -> Vec<String> {
        self.inner.models()
    }

    fn languages(&self) -> Vec<String> {
        self.inner.languages()
    }

    /// Keeps `pos` ("adj" or "verb") lemmas found in the treebank.
    #[pyo3(signature = (treebank, language, pos = "adj", top_k = None, slots = "merged"))]
    fn filter(&self, treebank: PathBuf, language: &str, pos: &str, top_k: Option<usize>, slots: &str) -> PyResult<PyFiltered> {
        let pos: PosClass = parse(pos)?;
        let slots: SlotMode = parse(slots)?;
        let lex = build_pos_lexicon(read_conllu(&treebank).map_err(to_py)?, language);
        let k = top_k.unwrap_or_else(|| stanceprobe::vocabfilter::default_top_k(language, pos));
        Ok(PyFiltered {
            inner: filter_probe_with(&self.inner, &lex, pos, k, slots).map_err(to_py)?,
        })
    }
}

#[pyclass(name = "FilteredProbeSet", frozen)]
struct PyFiltered {
    inner: stanceprobe::FilteredProbeSet,
}

#[pymethods]
impl PyFiltered {
    fn __len__(&self) -> usize {
        self.inner.entities.len()
    }

    #[getter]
    fn language(&self) -> String {
        self.inner.language.clone()
    }

    fn models(&self) -> Vec<String> {
        self.inner.models()
    }

    fn for_model(&self, model_id: &str) -> Self {
        PyFiltered {
            inner: self.inner.for_model(model_id),
        }
    }

    /// entity id → (gender, [(lemma, p)])
    fn entities(&self) -> BTreeMap<String, (String, Vec<(String, f64)>)> {
        self.inner
            .entities
            .iter()
            .map(|e| {
                (
                    format!("{}/{}", e.model_id, e.entity_id),
                    (e.gender.to_string(), e.lemmas.clone()),
                )
            })
            .collect()
    }

    fn dropped(&self) -> usize {
        self.inner.report.dropped_entities.len()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// PMI (base 2) per (gender, lemma).
    #[pyo3(signature = (k = 0.5, min_count = 5.0, weighting = "unit"))]
    fn pmi(&self, k: f64, min_count: f64, weighting: &str) -> PyResult<BTreeMap<(String, String), f64>> {
        let w: Weighting = parse(weighting)?;
        let counts = pmi::cooccurrence_counts(&self.inner, w).map_err(to_py)?.prune(min_count);
        let table = pmi::compute_pmi(&counts, k).map_err(to_py)?;
        Ok(table
            .values
            .into_iter()
            .map(|((g, w), v)| ((g.to_string(), w), v))
            .collect())
    }
}

#[pyclass(name = "Lexicon", frozen)]
struct PyLexicon {
    inner: stanceprobe::FusedLexicon,
}

#[pymethods]
impl PyLexicon {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyLexicon {
            inner: stanceprobe::FusedLexicon::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    /// Dirichlet concentrations (pos, neg, neu).
    fn get(&self, word: &str) -> Option<(f64, f64, f64)> {
        self.inner.get(word).map(|a| (a[0], a[1], a[2]))
    }

    fn argmax(&self, word: &str) -> Option<String> {
        self.inner.argmax(word).map(|s| s.to_string())
    }

    fn classify(&self, tokens: Vec<String>) -> String {
        lexfusion::classify_text(&self.inner, &tokens).to_string()
    }
}

/// Fuses lexicons given as (path, language, scale) triples.
#[pyfunction]
#[pyo3(signature = (sources, strategy = "pooled", view_weight = 1.0, seed = 0))]
fn fuse_lexicons(sources: Vec<(PathBuf, String, String)>, strategy: &str, view_weight: f64, seed: u64) -> PyResult<PyLexicon> {
    let strategy: FusionStrategy = parse(strategy)?;
    let mut views = Vec::with_capacity(sources.len());
    for (path, language, scale) in sources {
        let scale: Scale = parse(&scale)?;
        views.push(lexfusion::ingest_lexicon(&path, &language, scale).map_err(to_py)?);
    }
    let mut config = FusionConfig {
        view_weight,
        ..FusionConfig::default()
    };
    config.variational.seed = seed;
    Ok(PyLexicon {
        inner: lexfusion::fuse(&views, strategy, &config).map_err(to_py)?,
    })
}

#[pyclass(name = "Model", frozen, from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: stanceprobe::ModelParams,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: stanceprobe::ModelParams::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocab.clone()
    }

    #[getter]
    fn word_bias(&self) -> Vec<f64> {
        self.inner.m.clone()
    }

    /// η(word, sentiment) for (male, female).
    fn eta(&self, word: &str, sentiment: &str) -> PyResult<(f64, f64)> {
        let s: SentimentClass = parse(sentiment)?;
        let w = self
            .inner
            .word_index(word)
            .ok_or_else(|| PyValueError::new_err(format!("{word:?} not in vocabulary")))?;
        let e = self.inner.eta[w][s.index()];
        Ok((e[0], e[1]))
    }

    /// p(s | w) over (pos, neg, neu).
    fn posterior_sentiment(&self, word: &str) -> PyResult<(f64, f64, f64)> {
        let w = self
            .inner
            .word_index(word)
            .ok_or_else(|| PyValueError::new_err(format!("{word:?} not in vocabulary")))?;
        let p = lvm::posterior_sentiment(&self.inner, w);
        Ok((p[0], p[1], p[2]))
    }
}

fn train_config(alpha: f64, beta: f64, seed: u64, max_steps: usize) -> TrainConfig {
    TrainConfig {
        alpha,
        beta,
        seed,
        max_steps,
        ..TrainConfig::default()
    }
}

#[pyfunction]
#[pyo3(signature = (data, lexicon, alpha = 0.0, beta = 1.0, seed = 0, max_steps = 2000))]
fn train(
    py: Python<'_>,
    data: &PyFiltered,
    lexicon: &PyLexicon,
    alpha: f64,
    beta: f64,
    seed: u64,
    max_steps: usize,
) -> PyResult<PyModel> {
    let config = train_config(alpha, beta, seed, max_steps);
    let params = py
        .detach(|| lvm::train(&data.inner, &lexicon.inner, &config))
        .map_err(to_py)?;
    Ok(PyModel { inner: params })
}

/// One model per (α, β) pair, α-major.
#[pyfunction]
#[pyo3(signature = (data, lexicon, alpha_grid = None, beta_grid = None, seed = 0, max_steps = 2000))]
fn grid_train(
    py: Python<'_>,
    data: &PyFiltered,
    lexicon: &PyLexicon,
    alpha_grid: Option<Vec<f64>>,
    beta_grid: Option<Vec<f64>>,
    seed: u64,
    max_steps: usize,
) -> PyResult<Vec<PyModel>> {
    let alphas = alpha_grid.unwrap_or_else(|| ALPHA_GRID.to_vec());
    let betas = beta_grid.unwrap_or_else(|| BETA_GRID.to_vec());
    let base = train_config(0.0, 1.0, seed, max_steps);
    let models = py
        .detach(|| lvm::grid_train(&data.inner, &lexicon.inner, &alphas, &betas, &base))
        .map_err(to_py)?;
    Ok(models.into_iter().map(|inner| PyModel { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (models, gender, sentiment, k = 10, averaging = "tau"))]
fn deviation_ranking(
    models: Vec<PyModel>,
    gender: &str,
    sentiment: &str,
    k: usize,
    averaging: &str,
) -> PyResult<Vec<(String, f64)>> {
    let g: GenderClass = parse(gender)?;
    let s: SentimentClass = parse(sentiment)?;
    let avg: Averaging = parse(averaging)?;
    let params: Vec<_> = models.into_iter().map(|m| m.inner).collect();
    Ok(lvm::deviation_ranking_with(&params, g, s, k, avg).map_err(to_py)?.items)
}

/// Fraction of ranked lemmas whose lexicon argmax is `sentiment`.
#[pyfunction]
fn sentiment_frequency(lemmas: Vec<String>, lexicon: &PyLexicon, sentiment: &str) -> PyResult<Option<f64>> {
    let s: SentimentClass = parse(sentiment)?;
    let ranking = stanceprobe::DeviationRanking {
        gender: GenderClass::Male,
        sentiment: s,
        items: lemmas.into_iter().map(|l| (l, 1.0)).collect(),
    };
    Ok(stats::sentiment_frequency(&ranking, &lexicon.inner, s))
}

/// (t, df, p)
#[pyfunction]
fn welch_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let r = stats::welch_test(&a, &b).map_err(to_py)?;
    Ok((r.t, r.df, r.p))
}

#[pyfunction]
fn bonferroni(p_values: Vec<f64>, m: usize) -> PyResult<Vec<bool>> {
    stats::bonferroni(&p_values, m).map_err(to_py)
}

/// OLS with treatment coding. `factors` maps a factor name to one level per
/// observation; `order` fixes the term order.
#[pyfunction]
#[pyo3(signature = (values, factors, order, reference_levels = None))]
fn anova_ols(
    values: Vec<f64>,
    factors: BTreeMap<String, Vec<String>>,
    order: Vec<String>,
    reference_levels: Option<BTreeMap<String, String>>,
) -> PyResult<(Vec<(String, f64, f64, f64, f64)>, f64, usize)> {
    if let Some((name, _)) = factors.iter().find(|(_, v)| v.len() != values.len()) {
        return Err(PyValueError::new_err(format!("factor {name:?} has the wrong length")));
    }
    let obs: Vec<Observation> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let levels = factors.iter().map(|(f, l)| (f.clone(), l[i].clone())).collect();
            Observation::new(*v, levels, GenderClass::Female, SentimentClass::Pos)
        })
        .collect::<stanceprobe::Result<_>>()
        .map_err(to_py)?;
    let r = stats::anova_ols(&obs, &order, &reference_levels.unwrap_or_default()).map_err(to_py)?;
    let rows = r
        .coefficients
        .iter()
        .map(|c| (c.term.clone(), c.estimate, c.std_err, c.t, c.p))
        .collect();
    Ok((rows, r.model_p, r.residual_df))
}

/// Runs the whole pipeline from a TOML config; returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed = None, cache = None))]
fn run_all(py: Python<'_>, config: PathBuf, out_dir: PathBuf, seed: Option<u64>, cache: Option<PathBuf>) -> PyResult<String> {
    let mut cfg = Config::load(&config).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.apply_seed(s);
    }
    let manifest = py
        .detach(|| pipeline::run_all(&cfg, &out_dir, cache.as_deref()))
        .map_err(to_py)?;
    manifest.to_json().map_err(to_py)
}

#[pymodule]
pub fn stanceprobe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProbeSet>()?;
    m.add_class::<PyFiltered>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fuse_lexicons, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(grid_train, m)?)?;
    m.add_function(wrap_pyfunction!(deviation_ranking, m)?)?;
    m.add_function(wrap_pyfunction!(sentiment_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(welch_test, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni, m)?)?;
    m.add_function(wrap_pyfunction!(anova_ols, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
