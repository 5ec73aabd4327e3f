//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SlotMode;
use crate::error::{Error, Result};
use crate::lexfusion::{FusionConfig, FusionStrategy, Scale};
use crate::lvm::{Averaging, TrainConfig, ALPHA_GRID, BETA_GRID};
use crate::pmi::Weighting;
use crate::util::sha256_hex;
use crate::vocabfilter::PosClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconSource {
    pub path: PathBuf,
    pub language: String,
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub politicians: Option<PathBuf>,
    pub probes: Vec<PathBuf>,
    /// language → CoNLL-U treebank
    pub treebanks: BTreeMap<String, PathBuf>,
    pub lexicons: Vec<LexiconSource>,
    pub supersenses: Option<PathBuf>,
}

impl Inputs {
    pub fn all_paths(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        out.extend(self.politicians.as_deref());
        out.extend(self.probes.iter().map(PathBuf::as_path));
        out.extend(self.treebanks.values().map(PathBuf::as_path));
        out.extend(self.lexicons.iter().map(|l| l.path.as_path()));
        out.extend(self.supersenses.as_deref());
        out
    }
}

/// Metadata used as ANOVA factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub architecture: String,
    pub size: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    pub pos_classes: Vec<PosClass>,
    /// "lang:adj" → k; unset pairs use the language default.
    pub top_k: BTreeMap<String, usize>,
    pub slot_mode: SlotMode,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            pos_classes: vec![PosClass::Adj, PosClass::Verb],
            top_k: BTreeMap::new(),
            slot_mode: SlotMode::Merged,
        }
    }
}

impl FilterSettings {
    pub fn top_k_for(&self, language: &str, pos: PosClass) -> usize {
        self.top_k
            .get(&format!("{language}:{pos}"))
            .copied()
            .unwrap_or_else(|| crate::vocabfilter::default_top_k(language, pos))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmiSettings {
    pub smoothing_k: f64,
    pub min_count: f64,
    pub weighting: Weighting,
}

impl Default for PmiSettings {
    fn default() -> Self {
        PmiSettings {
            smoothing_k: 0.5,
            min_count: 5.0,
            weighting: Weighting::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LvmSettings {
    pub train: TrainConfig,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// Length of each deviation ranking.
    pub rank_k: usize,
    pub averaging: Averaging,
}

impl Default for LvmSettings {
    fn default() -> Self {
        LvmSettings {
            train: TrainConfig::default(),
            alpha_grid: ALPHA_GRID.to_vec(),
            beta_grid: BETA_GRID.to_vec(),
            rank_k: 10,
            averaging: Averaging::Tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    pub strategy: FusionStrategy,
    #[serde(flatten)]
    pub config: FusionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsSettings {
    /// Factor order of the ANOVA table.
    pub factors: Vec<String>,
    pub reference_levels: BTreeMap<String, String>,
    /// Number of comparisons for the Bonferroni correction.
    pub comparisons: usize,
    /// Ranking length behind each sentiment frequency.
    pub frequency_k: usize,
}

impl Default for StatsSettings {
    fn default() -> Self {
        StatsSettings {
            factors: vec!["architecture".into(), "size".into(), "language".into()],
            reference_levels: BTreeMap::new(),
            comparisons: 3,
            frequency_k: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub inputs: Inputs,
    /// model id → metadata
    pub models: BTreeMap<String, ModelMeta>,
    pub filter: FilterSettings,
    pub pmi: PmiSettings,
    pub lvm: LvmSettings,
    pub fusion: FusionSettings,
    pub stats: StatsSettings,
}

impl Config {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative input paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let inputs = &mut self.inputs;
        inputs.politicians.iter_mut().for_each(fix);
        inputs.probes.iter_mut().for_each(fix);
        inputs.treebanks.values_mut().for_each(fix);
        inputs.lexicons.iter_mut().for_each(|l| fix(&mut l.path));
        inputs.supersenses.iter_mut().for_each(fix);
    }

    /// Pushes the run seed into every seeded component.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.lvm.train.seed = seed;
        self.fusion.config.variational.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.lvm.train.validate()?;
        if self.lvm.alpha_grid.is_empty() || self.lvm.beta_grid.is_empty() {
            return Err(Error::Config("hyperparameter grids must be non-empty".into()));
        }
        if self.lvm.rank_k == 0 {
            return Err(Error::Config("rank_k must be positive".into()));
        }
        if self.stats.frequency_k == 0 {
            return Err(Error::Config("stats.frequency_k must be positive".into()));
        }
        if self.stats.comparisons == 0 {
            return Err(Error::Config("stats.comparisons must be positive".into()));
        }
        if self.filter.pos_classes.is_empty() {
            return Err(Error::Config("filter.pos_classes is empty".into()));
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    /// sha256 of the canonical JSON form.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}
