//! Writes the bundled synthetic corpus: politicians, probe tables for four
//! models in two languages, small treebanks, lexicons and a config.
//!
//!     cargo run -p stanceprobe --example make_fixture -- fixtures

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use stanceprobe::corpus::{write_probe_set, ProbeEntry, ProbeSet, ProbeTable, Slot};
use stanceprobe::util::write_atomic;
use stanceprobe::GenderClass;

#[derive(Clone, Copy, PartialEq)]
enum Sent {
    Pos,
    Neg,
    Neu,
}

/// (form, lemma, upos, sentiment of the lemma)
type Word = (&'static str, &'static str, &'static str, Sent);

const EN: &[Word] = &[
    ("honest", "honest", "ADJ", Sent::Pos),
    ("brave", "brave", "ADJ", Sent::Pos),
    ("braver", "brave", "ADJ", Sent::Pos),
    ("smart", "smart", "ADJ", Sent::Pos),
    ("smarter", "smart", "ADJ", Sent::Pos),
    ("kind", "kind", "ADJ", Sent::Pos),
    ("strong", "strong", "ADJ", Sent::Pos),
    ("wise", "wise", "ADJ", Sent::Pos),
    ("loyal", "loyal", "ADJ", Sent::Pos),
    ("fair", "fair", "ADJ", Sent::Pos),
    ("corrupt", "corrupt", "ADJ", Sent::Neg),
    ("weak", "weak", "ADJ", Sent::Neg),
    ("weaker", "weak", "ADJ", Sent::Neg),
    ("angry", "angry", "ADJ", Sent::Neg),
    ("angrier", "angry", "ADJ", Sent::Neg),
    ("cruel", "cruel", "ADJ", Sent::Neg),
    ("lazy", "lazy", "ADJ", Sent::Neg),
    ("dishonest", "dishonest", "ADJ", Sent::Neg),
    ("arrogant", "arrogant", "ADJ", Sent::Neg),
    ("greedy", "greedy", "ADJ", Sent::Neg),
    ("tall", "tall", "ADJ", Sent::Neu),
    ("young", "young", "ADJ", Sent::Neu),
    ("younger", "young", "ADJ", Sent::Neu),
    ("old", "old", "ADJ", Sent::Neu),
    ("older", "old", "ADJ", Sent::Neu),
    ("former", "former", "ADJ", Sent::Neu),
    ("local", "local", "ADJ", Sent::Neu),
    ("national", "national", "ADJ", Sent::Neu),
    ("rural", "rural", "ADJ", Sent::Neu),
    ("helped", "help", "VERB", Sent::Pos),
    ("won", "win", "VERB", Sent::Pos),
    ("supported", "support", "VERB", Sent::Pos),
    ("led", "lead", "VERB", Sent::Pos),
    ("praised", "praise", "VERB", Sent::Pos),
    ("lied", "lie", "VERB", Sent::Neg),
    ("failed", "fail", "VERB", Sent::Neg),
    ("attacked", "attack", "VERB", Sent::Neg),
    ("stole", "steal", "VERB", Sent::Neg),
    ("resigned", "resign", "VERB", Sent::Neg),
    ("said", "say", "VERB", Sent::Neu),
    ("went", "go", "VERB", Sent::Neu),
    ("met", "meet", "VERB", Sent::Neu),
    ("visited", "visit", "VERB", Sent::Neu),
    ("announced", "announce", "VERB", Sent::Neu),
    ("president", "president", "NOUN", Sent::Neu),
    ("minister", "minister", "NOUN", Sent::Neu),
    ("party", "party", "NOUN", Sent::Neu),
    ("senator", "senator", "NOUN", Sent::Neu),
];

const FR: &[Word] = &[
    ("honnête", "honnête", "ADJ", Sent::Pos),
    ("courageux", "courageux", "ADJ", Sent::Pos),
    ("courageuse", "courageux", "ADJ", Sent::Pos),
    ("intelligent", "intelligent", "ADJ", Sent::Pos),
    ("intelligente", "intelligent", "ADJ", Sent::Pos),
    ("gentil", "gentil", "ADJ", Sent::Pos),
    ("gentille", "gentil", "ADJ", Sent::Pos),
    ("fort", "fort", "ADJ", Sent::Pos),
    ("sage", "sage", "ADJ", Sent::Pos),
    ("loyal", "loyal", "ADJ", Sent::Pos),
    ("juste", "juste", "ADJ", Sent::Pos),
    ("corrompu", "corrompu", "ADJ", Sent::Neg),
    ("corrompue", "corrompu", "ADJ", Sent::Neg),
    ("faible", "faible", "ADJ", Sent::Neg),
    ("cruel", "cruel", "ADJ", Sent::Neg),
    ("cruelle", "cruel", "ADJ", Sent::Neg),
    ("paresseux", "paresseux", "ADJ", Sent::Neg),
    ("malhonnête", "malhonnête", "ADJ", Sent::Neg),
    ("arrogant", "arrogant", "ADJ", Sent::Neg),
    ("arrogante", "arrogant", "ADJ", Sent::Neg),
    ("avide", "avide", "ADJ", Sent::Neg),
    ("grand", "grand", "ADJ", Sent::Neu),
    ("grande", "grand", "ADJ", Sent::Neu),
    ("jeune", "jeune", "ADJ", Sent::Neu),
    ("vieux", "vieux", "ADJ", Sent::Neu),
    ("vieille", "vieux", "ADJ", Sent::Neu),
    ("ancien", "ancien", "ADJ", Sent::Neu),
    ("ancienne", "ancien", "ADJ", Sent::Neu),
    ("local", "local", "ADJ", Sent::Neu),
    ("national", "national", "ADJ", Sent::Neu),
    ("rural", "rural", "ADJ", Sent::Neu),
    ("aidé", "aider", "VERB", Sent::Pos),
    ("gagné", "gagner", "VERB", Sent::Pos),
    ("soutenu", "soutenir", "VERB", Sent::Pos),
    ("mené", "mener", "VERB", Sent::Pos),
    ("menti", "mentir", "VERB", Sent::Neg),
    ("échoué", "échouer", "VERB", Sent::Neg),
    ("attaqué", "attaquer", "VERB", Sent::Neg),
    ("volé", "voler", "VERB", Sent::Neg),
    ("dit", "dire", "VERB", Sent::Neu),
    ("allé", "aller", "VERB", Sent::Neu),
    ("rencontré", "rencontrer", "VERB", Sent::Neu),
    ("visité", "visiter", "VERB", Sent::Neu),
    ("président", "président", "NOUN", Sent::Neu),
    ("ministre", "ministre", "NOUN", Sent::Neu),
    ("parti", "parti", "NOUN", Sent::Neu),
];

/// Tokens that appear in predictions but in no treebank.
const NOISE: &[&str] = &["the", ",", "mr", "##s", "le", "la", "m."];

const MODELS: [(&str, &str, &str); 4] = [
    ("bert-base", "bert", "base"),
    ("bert-large", "bert", "large"),
    ("xlmr-base", "xlmr", "base"),
    ("xlmr-large", "xlmr", "large"),
];

const N_MALE: usize = 36;
const N_FEMALE: usize = 20;
const N_OTHER: usize = 4;
const ENTRIES_PER_SLOT: usize = 20;

fn gender_of(i: usize) -> GenderClass {
    if i < N_MALE {
        GenderClass::Male
    } else if i < N_MALE + N_FEMALE {
        GenderClass::Female
    } else {
        GenderClass::Other
    }
}

/// Shift added to a word's logit for one gender: in English masculine names
/// lean negative and feminine names positive, in French the reverse.
fn gender_shift(lang: &str, g: GenderClass, s: Sent, strength: f64) -> f64 {
    let favored = match (lang == "en", g) {
        (true, GenderClass::Male) | (false, GenderClass::Female) => Sent::Neg,
        (true, GenderClass::Female) | (false, GenderClass::Male) => Sent::Pos,
        (_, GenderClass::Other) => return 0.0,
    };
    if s == favored {
        0.5 * strength
    } else {
        0.0
    }
}

fn probe_tables(rng: &mut ChaCha8Rng) -> Vec<ProbeTable> {
    let mut tables = Vec::new();
    let base_noise = Normal::new(0.0, 0.6).unwrap();
    let entity_noise = Normal::new(0.0, 0.35).unwrap();
    for (model_id, arch, size) in MODELS {
        let strength = match (arch, size) {
            ("bert", "base") => 1.0,
            ("bert", _) => 1.4,
            (_, "base") => 1.8,
            _ => 2.2,
        };
        for (lang, words) in [("en", EN), ("fr", FR)] {
            let mut vocab: Vec<(&str, Option<Sent>)> = words.iter().map(|w| (w.0, Some(w.3))).collect();
            vocab.extend(NOISE.iter().map(|t| (*t, None)));
            let base: Vec<f64> = vocab.iter().map(|_| base_noise.sample(rng)).collect();
            for i in 0..N_MALE + N_FEMALE + N_OTHER {
                let g = gender_of(i);
                for slot in [Slot::Prefix, Slot::Suffix] {
                    let logits: Vec<f64> = vocab
                        .iter()
                        .zip(&base)
                        .map(|((_, s), b)| {
                            let shift = s.map(|s| gender_shift(lang, g, s, strength)).unwrap_or(0.0);
                            b + shift + entity_noise.sample(rng)
                        })
                        .collect();
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                    let mut entries: Vec<ProbeEntry> = vocab
                        .iter()
                        .zip(&logits)
                        .map(|((tok, _), l)| ProbeEntry {
                            token: tok.to_string(),
                            prob: (l - max).exp() / z,
                        })
                        .collect();
                    entries.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.token.cmp(&b.token)));
                    entries.truncate(ENTRIES_PER_SLOT);
                    tables.push(ProbeTable {
                        model_id: model_id.to_string(),
                        language: lang.to_string(),
                        entity_id: format!("Q{}", 1000 + i),
                        gender: g,
                        slot,
                        entries,
                    });
                }
            }
        }
    }
    tables
}

fn politicians(rng: &mut ChaCha8Rng) -> String {
    const FIRST: [&str; 12] = [
        "Alex", "Sam", "Jordan", "Morgan", "Robin", "Casey", "Jamie", "Taylor", "Avery", "Riley", "Quinn", "Noel",
    ];
    const LAST: [&str; 10] = [
        "Martin", "Bernard", "Dubois", "Smith", "Moreau", "Laurent", "Brown", "Garcia", "Petit", "Wilson",
    ];
    let mut out = String::new();
    for i in 0..N_MALE + N_FEMALE + N_OTHER {
        let label = match gender_of(i) {
            GenderClass::Male => "male",
            GenderClass::Female => "female",
            GenderClass::Other => "non-binary",
        };
        let name = format!("{} {}", FIRST[rng.random_range(0..FIRST.len())], LAST[i % LAST.len()]);
        let rec = serde_json::json!({
            "entity_id": format!("Q{}", 1000 + i),
            "gender_raw": label,
            "names": {"en": name, "fr": name},
        });
        let _ = writeln!(out, "{rec}");
    }
    // one record without a gender, dropped on ingestion
    let _ = writeln!(
        out,
        "{}",
        serde_json::json!({"entity_id": "Q9999", "names": {"en": "Pat Doe"}})
    );
    out
}

fn conllu(words: &[Word]) -> String {
    let mut out = String::new();
    for (i, (form, lemma, upos, _)) in words.iter().enumerate() {
        let _ = writeln!(out, "# sent_id = {}", i + 1);
        let _ = writeln!(out, "1\t{form}\t{lemma}\t{upos}\t_\t_\t0\troot\t_\t_");
        let _ = writeln!(out, "2\t.\t.\tPUNCT\t_\t_\t1\tpunct\t_\t_");
        out.push('\n');
    }
    out
}

fn sign(s: Sent) -> i32 {
    match s {
        Sent::Pos => 1,
        Sent::Neg => -1,
        Sent::Neu => 0,
    }
}

fn lexicons(dir: &Path) {
    let lemmas = |words: &[Word]| -> Vec<Word> {
        let mut v: Vec<Word> = words.iter().filter(|w| w.2 != "NOUN").copied().collect();
        v.dedup_by_key(|w| w.1);
        v
    };
    let en = lemmas(EN);
    let fr = lemmas(FR);

    let mut binary = String::from("# polar words only\n");
    for w in en.iter().filter(|w| w.3 != Sent::Neu) {
        let _ = writeln!(binary, "{}\t{}", w.1, sign(w.3));
    }
    write(dir, "lexicons/en_binary.tsv", &binary);

    let mut cont = String::new();
    for (i, w) in EN.iter().filter(|w| w.2 != "NOUN").enumerate() {
        let mag = 0.5 + 0.05 * (i % 8) as f64;
        let score = match w.3 {
            Sent::Pos => mag,
            Sent::Neg => -mag,
            Sent::Neu => 0.0,
        };
        let _ = writeln!(cont, "{}\t{}", w.0, score);
    }
    write(dir, "lexicons/en_continuous.tsv", &cont);

    let mut ternary = String::new();
    for w in &fr {
        let _ = writeln!(ternary, "{}\t{}", w.1, sign(w.3));
    }
    write(dir, "lexicons/fr_ternary.tsv", &ternary);

    let mut triples = String::new();
    for w in FR.iter().filter(|w| w.2 == "ADJ") {
        let t = match w.3 {
            Sent::Pos => "0.7\t0.1\t0.2",
            Sent::Neg => "0.1\t0.7\t0.2",
            Sent::Neu => "0.15\t0.15\t0.7",
        };
        let _ = writeln!(triples, "{}\t{}", w.0, t);
    }
    write(dir, "lexicons/fr_triples.tsv", &triples);
}

const SUPERSENSES: &str = "smart\tMIND\nwise\tMIND\nhonest\tMIND\nangry\tFEELING\ncruel\tFEELING\nkind\tFEELING\n\
brave\tBEHAVIOR\nlazy\tBEHAVIOR\ngreedy\tBEHAVIOR\ntall\tBODY\nyoung\tBODY\nold\tBODY\n";

const CONFIG: &str = r#"seed = 11

[inputs]
politicians = "politicians.jsonl"
probes = ["probes.jsonl"]
supersenses = "supersenses.tsv"
lexicons = [
    { path = "lexicons/en_binary.tsv", language = "en", scale = "binary" },
    { path = "lexicons/en_continuous.tsv", language = "en", scale = "continuous" },
    { path = "lexicons/fr_ternary.tsv", language = "fr", scale = "ternary" },
    { path = "lexicons/fr_triples.tsv", language = "fr", scale = "probability_triple" },
]

[inputs.treebanks]
en = "treebanks/en.conllu"
fr = "treebanks/fr.conllu"

[models.bert-base]
architecture = "bert"
size = "base"

[models.bert-large]
architecture = "bert"
size = "large"

[models.xlmr-base]
architecture = "xlmr"
size = "base"

[models.xlmr-large]
architecture = "xlmr"
size = "large"

[filter]
pos_classes = ["adj", "verb"]

[pmi]
min_count = 5

[lvm]
rank_k = 10

[lvm.train]
max_steps = 500

[stats]
frequency_k = 5
"#;

fn write(dir: &Path, rel: &str, text: &str) {
    let path = dir.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_atomic(&path, text.as_bytes()).unwrap();
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let mut rng = ChaCha8Rng::seed_from_u64(2022);
    write(&dir, "politicians.jsonl", &politicians(&mut rng));
    let set = ProbeSet::from_tables(probe_tables(&mut rng)).unwrap();
    std::fs::create_dir_all(&dir).unwrap();
    write_probe_set(&set, &dir.join("probes.jsonl")).unwrap();
    write(&dir, "treebanks/en.conllu", &conllu(EN));
    write(&dir, "treebanks/fr.conllu", &conllu(FR));
    lexicons(&dir);
    write(&dir, "supersenses.tsv", SUPERSENSES);
    write(&dir, "fixture.toml", CONFIG);
    println!("wrote {} probe tables to {}", set.len(), dir.display());
}
