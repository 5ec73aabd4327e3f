//! Treebank-derived POS/lemma lexicons and probe filtering.
//!
//! Masked-LM predictions are single tokens without context, so their part of
//! speech comes from treebank lookups rather than a tagger. A token survives
//! filtering only if some treebank marks its (case-folded) form with the
//! requested class; it is then replaced by its lemma.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityKey, GenderClass, ProbeEntry, ProbeSet, ProbeTable, Slot, SlotMode};
use crate::error::{Error, Result};
use crate::util::fold_case;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Adj,
    Verb,
    Other,
}

impl PosTag {
    pub fn from_upos(upos: &str) -> Self {
        match upos {
            "ADJ" => PosTag::Adj,
            "VERB" => PosTag::Verb,
            _ => PosTag::Other,
        }
    }
}

/// The word classes an analysis can be restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosClass {
    Adj,
    Verb,
}

impl PosClass {
    pub fn tag(self) -> PosTag {
        match self {
            PosClass::Adj => PosTag::Adj,
            PosClass::Verb => PosTag::Verb,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosClass::Adj => "adj",
            PosClass::Verb => "verb",
        }
    }
}

impl fmt::Display for PosClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adj" | "adjective" => Ok(PosClass::Adj),
            "verb" => Ok(PosClass::Verb),
            _ => Err(Error::invalid(format!("unknown POS class {s:?}"))),
        }
    }
}

/// Number of lemmas kept per entity: 20 for English in both classes,
/// otherwise 100 adjectives and 20 verbs.
pub fn default_top_k(language: &str, pos: PosClass) -> usize {
    match (language, pos) {
        ("en", _) => 20,
        (_, PosClass::Adj) => 100,
        (_, PosClass::Verb) => 20,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub pos_tags: BTreeSet<PosTag>,
    pub lemma: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosLexicon {
    pub language: String,
    pub entries: BTreeMap<String, LexEntry>,
}

impl PosLexicon {
    pub fn lookup(&self, token: &str) -> Option<&LexEntry> {
        self.entries.get(&fold_case(&self.language, token))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One annotated treebank token: CoNLL-U FORM, LEMMA, UPOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreebankToken {
    pub form: String,
    pub lemma: String,
    pub upos: String,
}

impl TreebankToken {
    pub fn new(form: &str, lemma: &str, upos: &str) -> Self {
        TreebankToken {
            form: form.to_string(),
            lemma: lemma.to_string(),
            upos: upos.to_string(),
        }
    }
}

/// Reads FORM, LEMMA and UPOS from CoNLL-U text.
///
/// Comment lines, multiword-token ranges (`1-2`) and empty nodes (`1.1`)
/// are skipped. A `_` lemma falls back to the form.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<TreebankToken>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected at least 4 tab-separated columns, got {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let form = cols[1];
        let lemma = if cols[2] == "_" { form } else { cols[2] };
        out.push(TreebankToken::new(form, lemma, cols[3]));
    }
    Ok(out)
}

pub fn read_conllu(path: &Path) -> Result<Vec<TreebankToken>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(std::io::BufReader::new(file))
}

/// Builds a lexicon from treebank tokens. Multiple treebanks are unioned by
/// chaining their token streams.
///
/// Each distinct folded form keeps the union of its POS tags and its
/// majority lemma; lemma ties go to the lexicographically smallest.
pub fn build_pos_lexicon<I>(tokens: I, language: &str) -> PosLexicon
where
    I: IntoIterator<Item = TreebankToken>,
{
    let mut tags: HashMap<String, BTreeSet<PosTag>> = HashMap::new();
    let mut lemma_counts: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    for tok in tokens {
        let form = fold_case(language, &tok.form);
        let lemma = fold_case(language, &tok.lemma);
        if form.is_empty() || lemma.is_empty() {
            continue;
        }
        tags.entry(form.clone())
            .or_default()
            .insert(PosTag::from_upos(&tok.upos));
        *lemma_counts.entry(form).or_default().entry(lemma).or_insert(0) += 1;
    }
    if tags.is_empty() {
        warn!("treebank stream for {language} is empty; lexicon is empty");
    }
    let entries = tags
        .into_iter()
        .map(|(form, pos_tags)| {
            let counts = &lemma_counts[&form];
            // reversed lemma order: among equal counts the smallest lemma wins
            let lemma = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(l, _)| l.clone())
                .expect("every form has at least one lemma");
            (form, LexEntry { pos_tags, lemma })
        })
        .collect();
    PosLexicon {
        language: language.to_string(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredEntity {
    pub model_id: String,
    pub language: String,
    pub entity_id: String,
    pub gender: GenderClass,
    /// Lemmas sorted by probability, descending; probabilities sum to 1.
    pub lemmas: Vec<(String, f64)>,
}

impl FilteredEntity {
    pub fn key(&self) -> EntityKey {
        EntityKey {
            model_id: self.model_id.clone(),
            language: self.language.clone(),
            entity_id: self.entity_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Entities left with no token of the requested class.
    pub dropped_entities: Vec<EntityKey>,
    /// Token occurrences absent from every treebank.
    pub unknown_tokens: usize,
    /// Token occurrences known to the treebank but of another class.
    pub other_class_tokens: usize,
}

/// Per-entity lemma distributions (p̂(w|n)) for one language and POS class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredProbeSet {
    pub language: String,
    pub pos_class: PosClass,
    pub top_k: usize,
    pub entities: Vec<FilteredEntity>,
    pub report: FilterReport,
}

impl FilteredProbeSet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.entities.iter().map(|e| e.model_id.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Restricts to one model's entities.
    pub fn for_model(&self, model_id: &str) -> FilteredProbeSet {
        FilteredProbeSet {
            language: self.language.clone(),
            pos_class: self.pos_class,
            top_k: self.top_k,
            entities: self
                .entities
                .iter()
                .filter(|e| e.model_id == model_id)
                .cloned()
                .collect(),
            report: FilterReport::default(),
        }
    }

    /// Re-expresses the lemma lists as prefix-slot probe tables.
    pub fn to_probe_set(&self) -> ProbeSet {
        let tables = self
            .entities
            .iter()
            .map(|e| ProbeTable {
                model_id: e.model_id.clone(),
                language: e.language.clone(),
                entity_id: e.entity_id.clone(),
                gender: e.gender,
                slot: Slot::Prefix,
                entries: e
                    .lemmas
                    .iter()
                    .map(|(token, prob)| ProbeEntry {
                        token: token.clone(),
                        prob: *prob,
                    })
                    .collect(),
            })
            .collect();
        ProbeSet::from_tables(tables).expect("filtered entities have unique keys")
    }
}

pub fn filter_probe(
    probe: &ProbeSet,
    lex: &PosLexicon,
    pos_class: PosClass,
    top_k: usize,
) -> Result<FilteredProbeSet> {
    filter_probe_with(probe, lex, pos_class, top_k, SlotMode::Merged)
}

/// Keeps tokens of `pos_class`, maps them to lemmas (summing the mass of
/// forms sharing a lemma), truncates to `top_k` and renormalizes.
///
/// Only tables in the lexicon's language are considered.
pub fn filter_probe_with(
    probe: &ProbeSet,
    lex: &PosLexicon,
    pos_class: PosClass,
    top_k: usize,
    slots: SlotMode,
) -> Result<FilteredProbeSet> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let wanted = pos_class.tag();
    let mut report = FilterReport::default();
    let mut entities = Vec::new();
    for (key, (gender, dist)) in probe.entity_distributions(slots) {
        if key.language != lex.language {
            continue;
        }
        let mut by_lemma: BTreeMap<String, f64> = BTreeMap::new();
        for (token, prob) in dist {
            match lex.lookup(&token) {
                None => report.unknown_tokens += 1,
                Some(entry) if entry.pos_tags.contains(&wanted) => {
                    *by_lemma.entry(entry.lemma.clone()).or_insert(0.0) += prob;
                }
                Some(_) => report.other_class_tokens += 1,
            }
        }
        let mut lemmas: Vec<(String, f64)> = by_lemma.into_iter().filter(|(_, p)| *p > 0.0).collect();
        if lemmas.is_empty() {
            report.dropped_entities.push(key);
            continue;
        }
        lemmas.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        lemmas.truncate(top_k);
        let total: f64 = lemmas.iter().map(|(_, p)| p).sum();
        for (_, p) in lemmas.iter_mut() {
            *p /= total;
        }
        entities.push(FilteredEntity {
            model_id: key.model_id,
            language: key.language,
            entity_id: key.entity_id,
            gender,
            lemmas,
        });
    }
    Ok(FilteredProbeSet {
        language: lex.language.clone(),
        pos_class,
        top_k,
        entities,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(f: &str, l: &str, u: &str) -> TreebankToken {
        TreebankToken::new(f, l, u)
    }

    fn probe(entries: &[(&str, f64)]) -> ProbeSet {
        ProbeSet::from_tables(vec![ProbeTable {
            model_id: "m".into(),
            language: "en".into(),
            entity_id: "Q1".into(),
            gender: GenderClass::Female,
            slot: Slot::Prefix,
            entries: entries
                .iter()
                .map(|(t, p)| ProbeEntry {
                    token: t.to_string(),
                    prob: *p,
                })
                .collect(),
        }])
        .unwrap()
    }

    #[test]
    fn single_adjective() {
        let lex = build_pos_lexicon(vec![tok("strong", "strong", "ADJ")], "en");
        let e = &lex.entries["strong"];
        assert_eq!(e.lemma, "strong");
        assert_eq!(e.pos_tags, BTreeSet::from([PosTag::Adj]));
    }

    #[test]
    fn gendered_form_maps_to_lemma() {
        let lex = build_pos_lexicon(vec![tok("belle", "beau", "ADJ")], "fr");
        assert_eq!(lex.lookup("Belle").unwrap().lemma, "beau");
    }

    #[test]
    fn majority_lemma_and_tag_union() {
        let lex = build_pos_lexicon(
            vec![
                tok("run", "run", "VERB"),
                tok("run", "run", "VERB"),
                tok("run", "run-n", "NOUN"),
            ],
            "en",
        );
        let e = &lex.entries["run"];
        assert_eq!(e.pos_tags, BTreeSet::from([PosTag::Verb, PosTag::Other]));
        assert_eq!(e.lemma, "run");
    }

    #[test]
    fn lemma_tie_breaks_lexicographically() {
        let lex = build_pos_lexicon(vec![tok("x", "b", "ADJ"), tok("x", "a", "ADJ")], "en");
        assert_eq!(lex.entries["x"].lemma, "a");
    }

    #[test]
    fn empty_treebank() {
        assert!(build_pos_lexicon(Vec::new(), "en").is_empty());
    }

    #[test]
    fn conllu_columns() {
        let text = "# sent_id = 1\n1-2\tdu\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\tde\tADP\t_\t_\t_\t_\t_\t_\n2\tBelle\tbeau\tADJ\t_\t_\t_\t_\t_\t_\n2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n3\tvit\t_\tVERB\t_\t_\t_\t_\t_\t_\n\n";
        let toks = parse_conllu(text.as_bytes()).unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[1], tok("Belle", "beau", "ADJ"));
        assert_eq!(toks[2].lemma, "vit");
    }

    #[test]
    fn renormalizes_top_k() {
        let lex = build_pos_lexicon(
            vec![
                tok("good", "good", "ADJ"),
                tok("bad", "bad", "ADJ"),
                tok("run", "run", "VERB"),
            ],
            "en",
        );
        let f = filter_probe(&probe(&[("good", 0.2), ("run", 0.1), ("bad", 0.2)]), &lex, PosClass::Adj, 2)
            .unwrap();
        let lemmas = &f.entities[0].lemmas;
        assert_eq!(lemmas.len(), 2);
        assert_eq!(lemmas[0], ("bad".to_string(), 0.5));
        assert_eq!(lemmas[1], ("good".to_string(), 0.5));
        assert_eq!(f.report.other_class_tokens, 1);
    }

    #[test]
    fn entity_without_matches_is_dropped() {
        let lex = build_pos_lexicon(vec![tok("the", "the", "DET")], "en");
        let f = filter_probe(&probe(&[("the", 0.9), ("zzz", 0.1)]), &lex, PosClass::Adj, 5).unwrap();
        assert!(f.is_empty());
        assert_eq!(f.report.dropped_entities.len(), 1);
        assert_eq!(f.report.unknown_tokens, 1);
    }

    #[test]
    fn forms_sharing_a_lemma_are_summed() {
        let lex = build_pos_lexicon(
            vec![tok("beau", "beau", "ADJ"), tok("belle", "beau", "ADJ"), tok("fort", "fort", "ADJ")],
            "fr",
        );
        let mut p = probe(&[("beau", 0.1), ("belle", 0.3), ("fort", 0.2)]);
        p = ProbeSet::from_tables(
            p.tables()
                .iter()
                .cloned()
                .map(|mut t| {
                    t.language = "fr".into();
                    t
                })
                .collect(),
        )
        .unwrap();
        let f = filter_probe(&p, &lex, PosClass::Adj, 10).unwrap();
        let l = &f.entities[0].lemmas;
        assert_eq!(l[0].0, "beau");
        assert!((l[0].1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_defaults() {
        assert_eq!(default_top_k("en", PosClass::Adj), 20);
        assert_eq!(default_top_k("en", PosClass::Verb), 20);
        for lang in ["ar", "zh", "fr", "hi", "ru", "es"] {
            assert_eq!(default_top_k(lang, PosClass::Adj), 100);
            assert_eq!(default_top_k(lang, PosClass::Verb), 20);
        }
    }

    #[test]
    fn zero_top_k_rejected() {
        let lex = build_pos_lexicon(vec![tok("good", "good", "ADJ")], "en");
        assert!(filter_probe(&probe(&[("good", 1.0)]), &lex, PosClass::Adj, 0).is_err());
    }
}
