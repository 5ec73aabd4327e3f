use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stanceprobe::report::RunManifest;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stanceprobe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stanceprobe"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("STANCEPROBE_CACHE")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = stanceprobe(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn subcommands_chain_from_probes_to_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let fx = fixtures();
    let config = fx.join("fixture.toml");

    let summary = ok(
        out,
        &[
            "ingest",
            "--politicians",
            path(&fx.join("politicians.jsonl")),
            "--probes",
            path(&fx.join("probes.jsonl")),
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["languages"], serde_json::json!(["en", "fr"]));
    assert!(out.join("probes.jsonl").exists());

    let probes = out.join("probes.jsonl");
    ok(
        out,
        &[
            "filter",
            "--probes",
            path(&probes),
            "--treebank",
            path(&fx.join("treebanks/en.conllu")),
            "--language",
            "en",
            "--top-k",
            "15",
        ],
    );
    let filtered = out.join("filtered_en_adj.json");
    let f: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&filtered).unwrap()).unwrap();
    assert_eq!(f["top_k"], 15);
    assert!(f["entities"].as_array().unwrap().iter().all(|e| e["lemmas"].as_array().unwrap().len() <= 15));

    let binary = format!("{}:en:binary", path(&fx.join("lexicons/en_binary.tsv")));
    let continuous = format!("{}:en:continuous", path(&fx.join("lexicons/en_continuous.tsv")));
    ok(out, &["fuse-lex", "--lexicon", &binary, "--lexicon", &continuous, "--language", "en"]);
    let lexicon = out.join("lexicon_en.json");
    assert!(lexicon.exists());

    ok(out, &["pmi", "--filtered", path(&filtered)]);
    let pmi = std::fs::read_to_string(out.join("pmi_en_adj.csv")).unwrap();
    assert!(pmi.starts_with("word,pmi_male,pmi_female,pmi_other,count_male,count_female,count_other\n"));

    ok(out, &["--config", path(&config), "train", "--filtered", path(&filtered), "--lexicon", path(&lexicon), "--grid"]);
    let grid = out.join("grid.json");
    let models: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&grid).unwrap()).unwrap();
    assert_eq!(models.len(), 40);

    ok(out, &["rank", "--models", path(&grid), "--k", "5"]);
    let ranks = std::fs::read_to_string(out.join("rankings.csv")).unwrap();
    assert_eq!(ranks.lines().count(), 6);
    assert_eq!(ranks.lines().next().unwrap().split(',').count(), 13);

    ok(out, &["stats", "--models", path(&grid), "--lexicon", path(&lexicon), "--k", "5"]);
    let welch = std::fs::read_to_string(out.join("welch.csv")).unwrap();
    let lines: Vec<&str> = welch.lines().collect();
    assert_eq!(lines[0], "sentiment,mean_male,mean_female,t,df,p,significant");
    assert_eq!(lines.len(), 4);

    let obs = out.join("obs.csv");
    std::fs::write(
        &obs,
        "value,architecture,size\n0.30,bert,base\n0.35,bert,large\n0.50,xlmr,base\n0.55,xlmr,large\n0.32,bert,base\n0.52,xlmr,large\n",
    )
    .unwrap();
    ok(
        out,
        &["anova", "--observations", path(&obs), "--factors", "architecture,size", "--reference", "architecture=xlmr"],
    );
    let anova = std::fs::read_to_string(out.join("anova.csv")).unwrap();
    let rows: Vec<&str> = anova.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["term", "Intercept", "architecture[bert]", "size[large]", "P-value"]);

    let points = out.join("points.csv");
    std::fs::write(
        &points,
        "language,model,gender,frequency,significant\nen,bert,male,0.4,true\nen,bert,female,0.6,false\nfr,bert,male,0.3,false\n",
    )
    .unwrap();
    ok(out, &["report", "--points", path(&points), "--title", "POS", "--name", "pos.svg"]);
    let svg = std::fs::read_to_string(out.join("pos.svg")).unwrap();
    assert_eq!(svg.matches("class=\"panel\"").count(), 2);
    assert_eq!(svg.matches("class=\"x-marker\"").count(), 1);
}

#[test]
fn run_all_writes_a_replayable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = fixtures().join("fixture.toml");
    ok(&out, &["--config", path(&config), "run-all"]);
    let manifest = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.grid.alpha.len() * manifest.grid.beta.len(), 40);
    assert_eq!(manifest.seeds["run"], 11);
    assert!(!manifest.input_digests.is_empty());
    for (rel, digest) in &manifest.outputs {
        let bytes = std::fs::read(out.join(rel)).unwrap();
        assert_eq!(&stanceprobe::util::sha256_hex(&bytes), digest, "{rel}");
    }

    let reseeded = dir.path().join("reseeded");
    ok(&reseeded, &["--config", path(&config), "--seed", "12", "run-all"]);
    let other = RunManifest::read(&reseeded.join("manifest.json")).unwrap();
    assert_ne!(manifest.config_hash, other.config_hash);
    assert_eq!(other.seeds["run"], 12);
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = stanceprobe(dir.path(), &["ingest", "--probes", "/nonexistent/probes.jsonl"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/probes.jsonl"));

    let o = stanceprobe(dir.path(), &["run-all"]);
    assert!(!o.status.success());

    let o = stanceprobe(dir.path(), &["fuse-lex", "--lexicon", "x.tsv:en:sevenpoint", "--language", "en"]);
    assert!(!o.status.success());
}
