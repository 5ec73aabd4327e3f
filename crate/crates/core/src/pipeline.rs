//! End-to-end run: filter, PMI, grid training, ranking, statistics, report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{read_politicians, read_probe_set, GenderClass, ProbeSet};
use crate::error::{Error, Result};
use crate::lexfusion::{fuse, ingest_lexicon, FusedLexicon, SentimentClass};
use crate::lvm::{all_rankings, deviation_ranking, grid_train_on, DeviationRanking, Gender, ModelParams, TrainingData};
use crate::pmi::{compute_pmi, cooccurrence_counts, csv_field, pmi_csv};
use crate::report::{emit_rank_table, render_sentiment_plot, GridSpec, PlotPoint, RunManifest};
use crate::stats::{
    anova_csv, anova_ols, bonferroni, read_supersense_map, sentiment_frequency, supersense_frequency, welch_test,
    Observation,
};
use crate::util::{file_digest, sha256_hex, write_atomic};
use crate::vocabfilter::{build_pos_lexicon, filter_probe_with, read_conllu, FilteredProbeSet, PosClass, PosLexicon};

pub const CACHE_ENV: &str = "STANCEPROBE_CACHE";

/// Merges several probe files into one set.
pub fn load_probes(paths: &[PathBuf]) -> Result<ProbeSet> {
    let mut tables = Vec::new();
    for p in paths {
        tables.extend(read_probe_set(p)?.tables().iter().cloned());
    }
    ProbeSet::from_tables(tables)
}

/// Keeps only entities listed in the politician file.
pub fn restrict_to_politicians(probes: &ProbeSet, path: &Path) -> Result<ProbeSet> {
    let parsed = read_politicians(path)?;
    for e in &parsed.errors {
        warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    let known: BTreeSet<&str> = parsed.records.iter().map(|r| r.entity_id.as_str()).collect();
    let kept: Vec<_> = probes
        .tables()
        .iter()
        .filter(|t| known.contains(t.entity_id.as_str()))
        .cloned()
        .collect();
    if kept.len() < probes.len() {
        info!("dropped {} probe tables for unlisted entities", probes.len() - kept.len());
    }
    ProbeSet::from_tables(kept)
}

pub fn load_pos_lexicons(treebanks: &BTreeMap<String, PathBuf>) -> Result<BTreeMap<String, PosLexicon>> {
    treebanks
        .iter()
        .map(|(lang, path)| Ok((lang.clone(), build_pos_lexicon(read_conllu(path)?, lang))))
        .collect()
}

/// One fused lexicon per language with at least one configured source.
pub fn load_fused_lexicons(cfg: &Config, pos: &BTreeMap<String, PosLexicon>) -> Result<BTreeMap<String, FusedLexicon>> {
    let mut views: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for src in &cfg.inputs.lexicons {
        let mut raw = ingest_lexicon(&src.path, &src.language, src.scale)?;
        if let Some(lex) = pos.get(&src.language) {
            raw = raw.lemmatize(lex);
        }
        views.entry(src.language.clone()).or_default().push(raw);
    }
    views
        .into_iter()
        .map(|(lang, v)| Ok((lang, fuse(&v, cfg.fusion.strategy, &cfg.fusion.config)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnalysisKey {
    pub model_id: String,
    pub language: String,
    pub pos: PosClass,
}

impl AnalysisKey {
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", safe_name(&self.model_id), safe_name(&self.language), self.pos)
    }
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub key: AnalysisKey,
    pub filtered: FilteredProbeSet,
    pub grid: Vec<ModelParams>,
    /// τ-averaged rankings of length `frequency_k`, male then female.
    pub rankings: Vec<DeviationRanking>,
    /// [gender][sentiment] → one frequency per grid model (undefined ones skipped)
    pub samples: [[Vec<f64>; 3]; 2],
}

/// Grid training, optionally cached on disk under a digest of its inputs.
pub fn train_grid_cached(
    filtered: &FilteredProbeSet,
    lexicon: &FusedLexicon,
    cfg: &Config,
    cache: Option<&Path>,
) -> Result<Vec<ModelParams>> {
    let cache_file = match cache {
        Some(dir) => {
            let key = serde_json::json!({
                "entities": filtered.entities,
                "lexicon": lexicon,
                "lvm": cfg.lvm,
                "version": env!("CARGO_PKG_VERSION"),
            });
            let digest = sha256_hex(serde_json::to_string(&key)?.as_bytes());
            let path = dir.join(format!("grid-{digest}.json"));
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(models) = serde_json::from_str::<Vec<ModelParams>>(&text) {
                    info!("cache hit {}", path.display());
                    return Ok(models);
                }
                warn!("ignoring unreadable cache entry {}", path.display());
            }
            Some(path)
        }
        None => None,
    };
    let data = TrainingData::from_filtered(filtered)?;
    let outcomes = grid_train_on(&data, lexicon, &cfg.lvm.alpha_grid, &cfg.lvm.beta_grid, &cfg.lvm.train)?;
    let models: Vec<ModelParams> = outcomes.into_iter().map(|o| o.params).collect();
    if let Some(path) = cache_file {
        std::fs::create_dir_all(path.parent().expect("cache dir")).map_err(|e| Error::io(&path, e))?;
        write_atomic(&path, serde_json::to_string(&models)?.as_bytes())?;
    }
    Ok(models)
}

/// Per-model sentiment frequencies of each single grid model's ranking.
pub fn frequency_samples(grid: &[ModelParams], lexicon: &FusedLexicon, k: usize) -> Result<[[Vec<f64>; 3]; 2]> {
    let mut out: [[Vec<f64>; 3]; 2] = Default::default();
    for model in grid {
        for g in Gender::ALL {
            for s in SentimentClass::ALL {
                let r = deviation_ranking(std::slice::from_ref(model), g.class(), s, k)?;
                if let Some(f) = sentiment_frequency(&r, lexicon, s) {
                    out[g.index()][s.index()].push(f);
                }
            }
        }
    }
    Ok(out)
}

fn has_both_genders(f: &FilteredProbeSet) -> bool {
    let genders: BTreeSet<GenderClass> = f.entities.iter().map(|e| e.gender).collect();
    genders.contains(&GenderClass::Male) && genders.contains(&GenderClass::Female)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct WelchKey {
    language: String,
    model_id: String,
    sentiment: SentimentClass,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// Writes `bytes` under `out_dir` and records its digest.
fn emit(out_dir: &Path, rel: &str, bytes: &[u8], outputs: &mut BTreeMap<String, String>) -> Result<()> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_atomic(&path, bytes)?;
    outputs.insert(rel.to_string(), sha256_hex(bytes));
    Ok(())
}

pub fn input_digests(cfg: &Config) -> Result<BTreeMap<String, String>> {
    cfg.inputs
        .all_paths()
        .into_iter()
        .map(|p| Ok((p.display().to_string(), file_digest(p)?)))
        .collect()
}

/// Runs every stage and writes all artifacts plus `manifest.json`.
pub fn run_all(cfg: &Config, out_dir: &Path, cache: Option<&Path>) -> Result<RunManifest> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let input_digests = input_digests(cfg)?;
    let mut outputs = BTreeMap::new();

    if cfg.inputs.probes.is_empty() {
        return Err(Error::Config("inputs.probes is empty".into()));
    }
    let mut probes = load_probes(&cfg.inputs.probes)?;
    if let Some(p) = &cfg.inputs.politicians {
        probes = restrict_to_politicians(&probes, p)?;
    }
    let pos_lex = load_pos_lexicons(&cfg.inputs.treebanks)?;
    let lexicons = load_fused_lexicons(cfg, &pos_lex)?;
    let supersenses = match &cfg.inputs.supersenses {
        Some(p) => Some(read_supersense_map(p)?),
        None => None,
    };
    for (lang, lex) in &lexicons {
        emit(out_dir, &format!("lexicons/{}.json", safe_name(lang)), lex.to_json()?.as_bytes(), &mut outputs)?;
    }

    let mut analyses: Vec<Analysis> = Vec::new();
    let mut filter_reports = BTreeMap::new();
    for language in probes.languages() {
        let Some(plex) = pos_lex.get(&language) else {
            warn!("no treebank for language {language}; skipped");
            continue;
        };
        let Some(lexicon) = lexicons.get(&language) else {
            warn!("no sentiment lexicon for language {language}; skipped");
            continue;
        };
        for &pos in &cfg.filter.pos_classes {
            let top_k = cfg.filter.top_k_for(&language, pos);
            let filtered_all = filter_probe_with(&probes, plex, pos, top_k, cfg.filter.slot_mode)?;
            filter_reports.insert(format!("{language}:{pos}"), filtered_all.report.clone());
            for model_id in filtered_all.models() {
                let key = AnalysisKey {
                    model_id: model_id.clone(),
                    language: language.clone(),
                    pos,
                };
                let filtered = filtered_all.for_model(&model_id);
                if !has_both_genders(&filtered) {
                    warn!("{} lacks male or female entities; skipped", key.stem());
                    continue;
                }
                let counts = cooccurrence_counts(&filtered, cfg.pmi.weighting)?.prune(cfg.pmi.min_count);
                if counts.grand_total > 0.0 {
                    let pmi = compute_pmi(&counts, cfg.pmi.smoothing_k)?;
                    emit(out_dir, &format!("pmi/{}.csv", key.stem()), pmi_csv(&pmi, &counts).as_bytes(), &mut outputs)?;
                }
                info!("training {} ({} entities)", key.stem(), filtered.entities.len());
                let grid = train_grid_cached(&filtered, lexicon, cfg, cache)?;
                let rankings = all_rankings(&grid, cfg.stats.frequency_k, cfg.lvm.averaging)?;
                let table = emit_rank_table(&rankings, cfg.lvm.rank_k);
                emit(out_dir, &format!("rankings/{}.csv", key.stem()), table.as_bytes(), &mut outputs)?;
                let samples = frequency_samples(&grid, lexicon, cfg.stats.frequency_k)?;
                analyses.push(Analysis {
                    key,
                    filtered,
                    grid,
                    rankings,
                    samples,
                });
            }
        }
    }
    emit(
        out_dir,
        "filter_report.json",
        format!("{}\n", serde_json::to_string_pretty(&filter_reports)?).as_bytes(),
        &mut outputs,
    )?;
    if analyses.is_empty() {
        return Err(Error::invalid("no (model, language, class) combination had data to analyze"));
    }

    for pos in cfg.filter.pos_classes.iter().copied() {
        let group: Vec<&Analysis> = analyses.iter().filter(|a| a.key.pos == pos).collect();
        if group.is_empty() {
            continue;
        }
        emit_group_stats(cfg, pos, &group, supersenses.as_ref(), out_dir, &mut outputs)?;
    }

    let mut seeds = BTreeMap::new();
    seeds.insert("run".to_string(), cfg.seed);
    seeds.insert("train".to_string(), cfg.lvm.train.seed);
    seeds.insert("variational".to_string(), cfg.fusion.config.variational.seed);
    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.digest()?,
        config: cfg.to_json_value()?,
        input_digests,
        seeds,
        grid: GridSpec {
            alpha: cfg.lvm.alpha_grid.clone(),
            beta: cfg.lvm.beta_grid.clone(),
        },
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    crate::report::write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn emit_group_stats(
    cfg: &Config,
    pos: PosClass,
    group: &[&Analysis],
    supersenses: Option<&BTreeMap<String, String>>,
    out_dir: &Path,
    outputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    // Welch tests, male vs female, one per (analysis, sentiment)
    let mut welch_csv =
        String::from("language,model,sentiment,n_male,n_female,mean_male,mean_female,t,df,p,significant\n");
    let mut significant: BTreeMap<WelchKey, bool> = BTreeMap::new();
    for a in group {
        for s in SentimentClass::ALL {
            let male = &a.samples[Gender::Male.index()][s.index()];
            let female = &a.samples[Gender::Female.index()][s.index()];
            let key = WelchKey {
                language: a.key.language.clone(),
                model_id: a.key.model_id.clone(),
                sentiment: s,
            };
            let (cols, sig) = match welch_test(male, female) {
                Ok(w) => {
                    let sig = bonferroni(&[w.p], cfg.stats.comparisons)?[0];
                    (format!("{:?},{:?},{:?},{}", w.t, w.df, w.p, sig), sig)
                }
                Err(e) => {
                    warn!("{} {s}: {e}", a.key.stem());
                    (",,,false".to_string(), false)
                }
            };
            significant.insert(key, sig);
            let _ = writeln!(
                welch_csv,
                "{},{},{},{},{},{},{},{}",
                csv_field(&a.key.language),
                csv_field(&a.key.model_id),
                s,
                male.len(),
                female.len(),
                fmt_opt(mean(male)),
                fmt_opt(mean(female)),
                cols
            );
        }
    }
    emit(out_dir, &format!("stats/welch_{pos}.csv"), welch_csv.as_bytes(), outputs)?;

    // frequency table and plots
    let mut freq_csv = String::from("language,model,gender,sentiment,mean_frequency,n\n");
    for a in group {
        for g in Gender::ALL {
            for s in SentimentClass::ALL {
                let xs = &a.samples[g.index()][s.index()];
                let _ = writeln!(
                    freq_csv,
                    "{},{},{},{},{},{}",
                    csv_field(&a.key.language),
                    csv_field(&a.key.model_id),
                    g,
                    s,
                    fmt_opt(mean(xs)),
                    xs.len()
                );
            }
        }
    }
    emit(out_dir, &format!("stats/frequency_{pos}.csv"), freq_csv.as_bytes(), outputs)?;

    for s in SentimentClass::ALL {
        let mut points = Vec::new();
        for a in group {
            let sig = significant[&WelchKey {
                language: a.key.language.clone(),
                model_id: a.key.model_id.clone(),
                sentiment: s,
            }];
            for g in Gender::ALL {
                if let Some(f) = mean(&a.samples[g.index()][s.index()]) {
                    points.push(PlotPoint {
                        language: a.key.language.clone(),
                        model: a.key.model_id.clone(),
                        gender: g.class(),
                        frequency: f,
                        significant: sig,
                    });
                }
            }
        }
        if points.is_empty() {
            continue;
        }
        let title = format!("{} frequency of top {} {} lemmas", s, cfg.stats.frequency_k, pos);
        let svg = render_sentiment_plot(&points, &title)?;
        let rel = format!("plots/{}_{}.svg", pos, s.as_str().to_lowercase());
        emit(out_dir, &rel, svg.as_bytes(), outputs)?;
    }

    // ANOVA per (gender, sentiment) over model metadata and language
    for g in Gender::ALL {
        for s in SentimentClass::ALL {
            let mut obs = Vec::new();
            for a in group {
                let Some(value) = mean(&a.samples[g.index()][s.index()]) else {
                    continue;
                };
                let mut factors = BTreeMap::new();
                factors.insert("language".to_string(), a.key.language.clone());
                if let Some(meta) = cfg.models.get(&a.key.model_id) {
                    factors.insert("architecture".to_string(), meta.architecture.clone());
                    factors.insert("size".to_string(), meta.size.clone());
                }
                factors.insert("model".to_string(), a.key.model_id.clone());
                obs.push(Observation::new(value, factors, g.class(), s)?);
            }
            let usable: Vec<String> = cfg
                .stats
                .factors
                .iter()
                .filter(|f| {
                    let levels: Option<BTreeSet<&String>> = obs.iter().map(|o| o.factors.get(*f)).collect();
                    levels.is_some_and(|l| l.len() >= 2)
                })
                .cloned()
                .collect();
            let rel = format!("stats/anova_{}_{}_{}.csv", pos, g, s.as_str().to_lowercase());
            let body = if usable.is_empty() {
                "# no factor with two or more levels\n".to_string()
            } else {
                match anova_ols(&obs, &usable, &cfg.stats.reference_levels) {
                    Ok(r) => anova_csv(&r),
                    Err(Error::RankDeficient(terms)) => format!("# rank deficient: {}\n", terms.join(";")),
                    Err(e) => format!("# {e}\n"),
                }
            };
            emit(out_dir, &rel, body.as_bytes(), outputs)?;
        }
    }

    if let Some(map) = supersenses {
        let mut csv = String::from("language,model,gender,sentiment,supersense,frequency\n");
        for a in group {
            for r in &a.rankings {
                for (class, f) in supersense_frequency(r, map) {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{:?}",
                        csv_field(&a.key.language),
                        csv_field(&a.key.model_id),
                        r.gender,
                        r.sentiment,
                        csv_field(&class),
                        f
                    );
                }
            }
        }
        emit(out_dir, &format!("stats/supersense_{pos}.csv"), csv.as_bytes(), outputs)?;
    }
    Ok(())
}

/// Re-runs a recorded configuration after checking every input digest.
pub fn replay(manifest: &RunManifest, out_dir: &Path, cache: Option<&Path>) -> Result<RunManifest> {
    let cfg: Config = serde_json::from_value(manifest.config.clone())?;
    if cfg.digest()? != manifest.config_hash {
        return Err(Error::Config("manifest config does not match its hash".into()));
    }
    let current = input_digests(&cfg)?;
    for (path, digest) in &manifest.input_digests {
        match current.get(path) {
            Some(d) if d == digest => {}
            _ => return Err(Error::Config(format!("input {path} changed since the manifest was written"))),
        }
    }
    run_all(&cfg, out_dir, cache)
}
