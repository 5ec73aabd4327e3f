use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use stanceprobe::config::{Config, LexiconSource};
use stanceprobe::corpus::{read_politicians, write_probe_set, SlotMode};
use stanceprobe::error::{Error, Result};
use stanceprobe::lexfusion::{fuse, ingest_lexicon, FusedLexicon, FusionStrategy, Scale, SentimentClass};
use stanceprobe::lvm::{all_rankings, grid_train_on, train_on, Averaging, Gender, ModelParams, TrainingData};
use stanceprobe::pipeline::{self, frequency_samples, CACHE_ENV};
use stanceprobe::pmi::{compute_pmi, cooccurrence_counts, pmi_csv, Weighting};
use stanceprobe::report::{emit_rank_table, emit_sentiment_plot, PlotPoint, RunManifest};
use stanceprobe::stats::{anova_csv, anova_ols, bonferroni, welch_test, Observation};
use stanceprobe::util::write_atomic;
use stanceprobe::vocabfilter::{build_pos_lexicon, filter_probe_with, read_conllu, FilteredProbeSet, PosClass};
use stanceprobe::GenderClass;

#[derive(Parser)]
#[command(name = "stanceprobe", version, about = "Gender-bias probing of masked language models")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Directory for cached intermediate artifacts
    #[arg(long, global = true, env = CACHE_ENV)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate politician and probe files; write normalized probes
    Ingest(IngestArgs),
    /// Keep one POS class, lemmatize, truncate and renormalize
    Filter(FilterArgs),
    /// Fuse sentiment lexicons into Dirichlet parameters
    FuseLex(FuseArgs),
    /// PMI between gender and lemma
    Pmi(PmiArgs),
    /// Train the latent-variable model (single run or full grid)
    Train(TrainArgs),
    /// Deviation rankings from trained models
    Rank(RankArgs),
    /// Sentiment frequencies and Welch tests, male vs female
    Stats(StatsArgs),
    /// OLS ANOVA over categorical factors
    Anova(AnovaArgs),
    /// Significance plot from frequency points
    Report(ReportArgs),
    /// Every stage from the configuration
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    politicians: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    probes: Vec<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long, num_args = 1..)]
    probes: Vec<PathBuf>,
    #[arg(long)]
    treebank: Option<PathBuf>,
    #[arg(long)]
    language: String,
    #[arg(long, default_value = "adj")]
    pos: PosClass,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    slots: Option<SlotMode>,
}

#[derive(Args)]
struct FuseArgs {
    /// PATH:LANGUAGE:SCALE, repeatable
    #[arg(long = "lexicon")]
    lexicons: Vec<String>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    strategy: Option<FusionStrategy>,
}

#[derive(Args)]
struct PmiArgs {
    /// Filtered probe set (JSON from `filter`)
    #[arg(long)]
    filtered: PathBuf,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    min_count: Option<f64>,
    #[arg(long)]
    weighting: Option<Weighting>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    filtered: PathBuf,
    /// Fused lexicon JSON
    #[arg(long)]
    lexicon: PathBuf,
    /// Train the whole (α, β) grid instead of one run
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct RankArgs {
    /// Model JSON: one model or a list
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    averaging: Option<Averaging>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct AnovaArgs {
    /// CSV with a `value` column and one column per factor
    #[arg(long)]
    observations: PathBuf,
    #[arg(long, value_delimiter = ',')]
    factors: Vec<String>,
    /// FACTOR=LEVEL, repeatable
    #[arg(long = "reference")]
    references: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// CSV: language,model,gender,frequency,significant
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long, default_value = "plot.svg")]
    name: String,
}

#[derive(Args)]
struct RunAllArgs {
    /// Replay a previous run from its manifest instead of --config
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    Ok(cfg)
}

fn out_path(cli: &Cli, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    Ok(cli.out_dir.join(name))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_models(path: &Path) -> Result<Vec<ModelParams>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match serde_json::from_str::<Vec<ModelParams>>(&text) {
        Ok(v) => Ok(v),
        Err(_) => Ok(vec![ModelParams::from_json(&text)?]),
    }
}

fn parse_lexicon_spec(spec: &str) -> Result<LexiconSource> {
    let mut parts = spec.rsplitn(3, ':');
    let (scale, language, path) = (parts.next(), parts.next(), parts.next());
    match (path, language, scale) {
        (Some(path), Some(language), Some(scale)) => Ok(LexiconSource {
            path: PathBuf::from(path),
            language: language.to_string(),
            scale: scale.parse::<Scale>()?,
        }),
        _ => Err(Error::invalid(format!("expected PATH:LANGUAGE:SCALE, got {spec:?}"))),
    }
}

/// Minimal CSV reader for the small tables the subcommands accept.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::invalid(format!("{} is empty", path.display()))),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("expected {} columns, found {}", header.len(), row.len()),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::invalid(format!("missing column {name:?}")))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => {
            let mut summary = serde_json::Map::new();
            if let Some(p) = a.politicians.as_ref().or(cfg.inputs.politicians.as_ref()) {
                let parsed = read_politicians(p)?;
                for e in &parsed.errors {
                    log::warn!("{}:{}: {}", p.display(), e.line, e.message);
                }
                let counts: BTreeMap<String, usize> =
                    parsed.gender_counts().into_iter().map(|(g, n)| (g.to_string(), n)).collect();
                summary.insert("politicians".into(), serde_json::json!({
                    "input": parsed.input_count,
                    "retained": parsed.records.len(),
                    "excluded": parsed.excluded,
                    "errors": parsed.errors.len(),
                    "genders": counts,
                }));
            }
            let probes = if a.probes.is_empty() { &cfg.inputs.probes } else { &a.probes };
            if !probes.is_empty() {
                let set = pipeline::load_probes(probes)?;
                summary.insert("probe_tables".into(), set.len().into());
                summary.insert("models".into(), set.models().into());
                summary.insert("languages".into(), set.languages().into());
                write_probe_set(&set, &out_path(cli, "probes.jsonl")?)?;
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Filter(a) => {
            let probes = pipeline::load_probes(if a.probes.is_empty() { &cfg.inputs.probes } else { &a.probes })?;
            let treebank = a
                .treebank
                .clone()
                .or_else(|| cfg.inputs.treebanks.get(&a.language).cloned())
                .ok_or_else(|| Error::invalid(format!("no treebank for {}", a.language)))?;
            let lex = build_pos_lexicon(read_conllu(&treebank)?, &a.language);
            let top_k = a.top_k.unwrap_or_else(|| cfg.filter.top_k_for(&a.language, a.pos));
            let filtered = filter_probe_with(&probes, &lex, a.pos, top_k, a.slots.unwrap_or(cfg.filter.slot_mode))?;
            info!(
                "{} entities kept, {} dropped",
                filtered.entities.len(),
                filtered.report.dropped_entities.len()
            );
            write_json(&out_path(cli, &format!("filtered_{}_{}.json", a.language, a.pos))?, &filtered)?;
        }
        Command::FuseLex(a) => {
            let mut sources: Vec<LexiconSource> = a
                .lexicons
                .iter()
                .map(|s| parse_lexicon_spec(s))
                .collect::<Result<_>>()?;
            if sources.is_empty() {
                sources = cfg.inputs.lexicons.clone();
            }
            if let Some(lang) = &a.language {
                sources.retain(|s| &s.language == lang);
            }
            let pos = pipeline::load_pos_lexicons(&cfg.inputs.treebanks)?;
            let mut by_lang: BTreeMap<String, Vec<_>> = BTreeMap::new();
            for s in &sources {
                let mut raw = ingest_lexicon(&s.path, &s.language, s.scale)?;
                if let Some(l) = pos.get(&s.language) {
                    raw = raw.lemmatize(l);
                }
                by_lang.entry(s.language.clone()).or_default().push(raw);
            }
            if by_lang.is_empty() {
                return Err(Error::invalid("no lexicons given"));
            }
            let strategy = a.strategy.unwrap_or(cfg.fusion.strategy);
            for (lang, views) in by_lang {
                let fused = fuse(&views, strategy, &cfg.fusion.config)?;
                write_atomic(&out_path(cli, &format!("lexicon_{lang}.json"))?, fused.to_json()?.as_bytes())?;
            }
        }
        Command::Pmi(a) => {
            let filtered: FilteredProbeSet = read_json(&a.filtered)?;
            let counts = cooccurrence_counts(&filtered, a.weighting.unwrap_or(cfg.pmi.weighting))?
                .prune(a.min_count.unwrap_or(cfg.pmi.min_count));
            let pmi = compute_pmi(&counts, a.k.unwrap_or(cfg.pmi.smoothing_k))?;
            let name = format!("pmi_{}_{}.csv", filtered.language, filtered.pos_class);
            write_atomic(&out_path(cli, &name)?, pmi_csv(&pmi, &counts).as_bytes())?;
        }
        Command::Train(a) => {
            let filtered: FilteredProbeSet = read_json(&a.filtered)?;
            let lexicon = FusedLexicon::from_json(
                &std::fs::read_to_string(&a.lexicon).map_err(|e| Error::io(&a.lexicon, e))?,
            )?;
            let data = TrainingData::from_filtered(&filtered)?;
            let mut base = cfg.lvm.train.clone();
            if a.grid {
                let outcomes = grid_train_on(&data, &lexicon, &cfg.lvm.alpha_grid, &cfg.lvm.beta_grid, &base)?;
                let models: Vec<ModelParams> = outcomes.into_iter().map(|o| o.params).collect();
                write_json(&out_path(cli, "grid.json")?, &models)?;
            } else {
                base.alpha = a.alpha.unwrap_or(base.alpha);
                base.beta = a.beta.unwrap_or(base.beta);
                let outcome = train_on(&data, &lexicon, &base)?;
                info!("{} steps, final loss {}", outcome.steps, outcome.final_loss.total);
                write_atomic(&out_path(cli, "model.json")?, outcome.params.to_json()?.as_bytes())?;
            }
        }
        Command::Rank(a) => {
            let models = read_models(&a.models)?;
            let k = a.k.unwrap_or(cfg.lvm.rank_k);
            let rankings = all_rankings(&models, k, a.averaging.unwrap_or(cfg.lvm.averaging))?;
            write_atomic(&out_path(cli, "rankings.csv")?, emit_rank_table(&rankings, k).as_bytes())?;
        }
        Command::Stats(a) => {
            let models = read_models(&a.models)?;
            let lexicon = FusedLexicon::from_json(
                &std::fs::read_to_string(&a.lexicon).map_err(|e| Error::io(&a.lexicon, e))?,
            )?;
            let samples = frequency_samples(&models, &lexicon, a.k.unwrap_or(cfg.stats.frequency_k))?;
            let mut csv = String::from("sentiment,mean_male,mean_female,t,df,p,significant\n");
            for s in SentimentClass::ALL {
                let m = &samples[Gender::Male.index()][s.index()];
                let f = &samples[Gender::Female.index()][s.index()];
                let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
                match welch_test(m, f) {
                    Ok(w) => {
                        let sig = bonferroni(&[w.p], cfg.stats.comparisons)?[0];
                        csv.push_str(&format!("{s},{},{},{},{},{},{sig}\n", mean(m), mean(f), w.t, w.df, w.p));
                    }
                    Err(e) => {
                        log::warn!("{s}: {e}");
                        csv.push_str(&format!("{s},,,,,,false\n"));
                    }
                }
            }
            write_atomic(&out_path(cli, "welch.csv")?, csv.as_bytes())?;
        }
        Command::Anova(a) => {
            let (header, rows) = read_csv(&a.observations)?;
            let value_col = column(&header, "value")?;
            let factors = if a.factors.is_empty() { cfg.stats.factors.clone() } else { a.factors.clone() };
            let cols: Vec<(String, usize)> = factors
                .iter()
                .map(|f| Ok((f.clone(), column(&header, f)?)))
                .collect::<Result<_>>()?;
            let gender = header.iter().position(|h| h == "gender");
            let sentiment = header.iter().position(|h| h == "sentiment");
            let obs: Vec<Observation> = rows
                .iter()
                .map(|r| {
                    let value: f64 = r[value_col]
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad value {:?}", r[value_col])))?;
                    let levels = cols.iter().map(|(f, c)| (f.clone(), r[*c].clone())).collect();
                    let g = gender.map(|c| r[c].parse()).transpose()?.unwrap_or(GenderClass::Female);
                    let s = sentiment.map(|c| r[c].parse()).transpose()?.unwrap_or(SentimentClass::Pos);
                    Observation::new(value, levels, g, s)
                })
                .collect::<Result<_>>()?;
            let mut refs = cfg.stats.reference_levels.clone();
            for r in &a.references {
                let (f, l) = r
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("expected FACTOR=LEVEL, got {r:?}")))?;
                refs.insert(f.to_string(), l.to_string());
            }
            let result = anova_ols(&obs, &factors, &refs)?;
            write_atomic(&out_path(cli, "anova.csv")?, anova_csv(&result).as_bytes())?;
        }
        Command::Report(a) => {
            let (header, rows) = read_csv(&a.points)?;
            let idx = |n: &str| column(&header, n);
            let (lc, mc, gc, fc, sc) = (idx("language")?, idx("model")?, idx("gender")?, idx("frequency")?, idx("significant")?);
            let points: Vec<PlotPoint> = rows
                .iter()
                .map(|r| {
                    Ok(PlotPoint {
                        language: r[lc].clone(),
                        model: r[mc].clone(),
                        gender: r[gc].parse()?,
                        frequency: r[fc]
                            .parse()
                            .map_err(|_| Error::invalid(format!("bad frequency {:?}", r[fc])))?,
                        significant: matches!(r[sc].as_str(), "true" | "1" | "yes"),
                    })
                })
                .collect::<Result<_>>()?;
            emit_sentiment_plot(&points, &a.title, &out_path(cli, &a.name)?)?;
        }
        Command::RunAll(a) => {
            std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
            let manifest = match &a.manifest {
                Some(m) => pipeline::replay(&RunManifest::read(m)?, &cli.out_dir, cli.cache.as_deref())?,
                None => {
                    if cli.config.is_none() {
                        return Err(Error::Config("run-all needs --config or --manifest".into()));
                    }
                    pipeline::run_all(&cfg, &cli.out_dir, cli.cache.as_deref())?
                }
            };
            info!("wrote {} artifacts to {}", manifest.outputs.len(), cli.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
