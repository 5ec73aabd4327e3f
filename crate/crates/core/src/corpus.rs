//! Entity records and masked-LM probe tables.
//!
//! Probe tables travel as JSON Lines, one table per line:
//!
//! ```text
//! {"model_id":"bert-base","language":"en","entity_id":"Q1","gender":"female","slot":"prefix","entries":[{"token":"strong","prob":0.12}]}
//! ```
//!
//! Probabilities are written in shortest round-trip form, so a canonically
//! formatted file survives `read_probe_set` / `write_probe_set` byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenderClass {
    Male,
    Female,
    Other,
}

impl GenderClass {
    pub const ALL: [GenderClass; 3] = [GenderClass::Male, GenderClass::Female, GenderClass::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            GenderClass::Male => "male",
            GenderClass::Female => "female",
            GenderClass::Other => "other",
        }
    }
}

impl fmt::Display for GenderClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenderClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "male" => Ok(GenderClass::Male),
            "female" => Ok(GenderClass::Female),
            "other" => Ok(GenderClass::Other),
            _ => Err(Error::invalid(format!("unknown gender class {s:?}"))),
        }
    }
}

/// Result of mapping a raw knowledge-base gender label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormalizedGender {
    Class(GenderClass),
    Excluded,
}

const OTHER_LABELS: [&str; 7] = [
    "non-binary",
    "genderfluid",
    "genderqueer",
    "third gender",
    "transfeminine",
    "transgender female",
    "transgender male",
];

/// Maps one of the twelve Wikidata gender identities onto a [`GenderClass`].
///
/// Animal labels ("female organism", "male organism") and anything
/// unrecognized are excluded.
pub fn normalize_gender(raw_label: &str) -> NormalizedGender {
    let label = raw_label.trim().to_lowercase();
    match label.as_str() {
        "male" => NormalizedGender::Class(GenderClass::Male),
        "female" | "cisgender female" => NormalizedGender::Class(GenderClass::Female),
        "female organism" | "male organism" => NormalizedGender::Excluded,
        l if OTHER_LABELS.contains(&l) => NormalizedGender::Class(GenderClass::Other),
        _ => {
            warn!("unrecognized gender label {raw_label:?}; record excluded");
            NormalizedGender::Excluded
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoliticianRecord {
    pub entity_id: String,
    pub gender: GenderClass,
    /// Language code to surface name. Ordered so serialization is stable.
    pub names: BTreeMap<String, String>,
}

impl PoliticianRecord {
    pub fn name_in(&self, language: &str) -> Option<&str> {
        self.names.get(language).map(String::as_str)
    }
}

#[derive(Debug, Deserialize)]
struct RawPolitician {
    entity_id: String,
    #[serde(default)]
    gender_raw: Option<String>,
    #[serde(default)]
    names: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Outcome of [`parse_politicians`]. `records.len() + excluded == input_count`.
#[derive(Debug, Clone, Default)]
pub struct PoliticianParse {
    pub records: Vec<PoliticianRecord>,
    pub input_count: usize,
    /// Records dropped for any reason: excluded gender, missing gender, or malformed.
    pub excluded: usize,
    pub errors: Vec<RecordError>,
}

impl PoliticianParse {
    pub fn gender_counts(&self) -> BTreeMap<GenderClass, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.gender).or_insert(0) += 1;
        }
        counts
    }
}

/// Reads politician JSON Lines (`{"entity_id", "gender_raw", "names"}`).
///
/// Malformed lines are reported with their 1-based line number and skipped;
/// parsing continues.
pub fn parse_politicians<R: BufRead>(reader: R) -> Result<PoliticianParse> {
    let mut out = PoliticianParse::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.input_count += 1;
        let reject = |out: &mut PoliticianParse, message: String| {
            warn!("politician line {line_no}: {message}");
            out.errors.push(RecordError {
                line: line_no,
                message,
            });
            out.excluded += 1;
        };
        let raw: RawPolitician = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                reject(&mut out, format!("malformed record: {e}"));
                continue;
            }
        };
        let names: BTreeMap<String, String> = raw
            .names
            .into_iter()
            .filter(|(_, v)| !v.trim().is_empty())
            .collect();
        if names.is_empty() {
            reject(&mut out, format!("{}: no names in any language", raw.entity_id));
            continue;
        }
        if !seen.insert(raw.entity_id.clone()) {
            reject(&mut out, format!("{}: duplicate entity_id", raw.entity_id));
            continue;
        }
        let gender = match raw.gender_raw.as_deref() {
            None => {
                warn!("politician line {line_no}: {} has no gender; dropped", raw.entity_id);
                out.excluded += 1;
                continue;
            }
            Some(label) => normalize_gender(label),
        };
        match gender {
            NormalizedGender::Class(gender) => out.records.push(PoliticianRecord {
                entity_id: raw.entity_id,
                gender,
                names,
            }),
            NormalizedGender::Excluded => out.excluded += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    /// `[MASK] <name>`
    Prefix,
    /// `<name> [MASK]`
    Suffix,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Prefix => "prefix",
            Slot::Suffix => "suffix",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which query slots feed an entity's word distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotMode {
    /// Union of both slots; a token predicted in both gets the summed mass.
    #[default]
    Merged,
    Prefix,
    Suffix,
}

impl SlotMode {
    pub fn includes(self, slot: Slot) -> bool {
        match self {
            SlotMode::Merged => true,
            SlotMode::Prefix => slot == Slot::Prefix,
            SlotMode::Suffix => slot == Slot::Suffix,
        }
    }
}

impl FromStr for SlotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merged" => Ok(SlotMode::Merged),
            "prefix" => Ok(SlotMode::Prefix),
            "suffix" => Ok(SlotMode::Suffix),
            _ => Err(Error::invalid(format!("unknown slot mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub token: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTable {
    pub model_id: String,
    pub language: String,
    pub entity_id: String,
    pub gender: GenderClass,
    pub slot: Slot,
    pub entries: Vec<ProbeEntry>,
}

impl ProbeTable {
    /// Sorts entries by probability, descending; ties keep token order.
    pub fn sort_entries(&mut self) {
        self.entries.sort_by(|a, b| {
            b.prob
                .total_cmp(&a.prob)
                .then_with(|| a.token.cmp(&b.token))
        });
    }

    fn key(&self) -> (String, String, Slot, String) {
        (
            self.model_id.clone(),
            self.entity_id.clone(),
            self.slot,
            self.language.clone(),
        )
    }
}

/// A validated, immutable collection of probe tables.
#[derive(Debug, Clone, Default)]
pub struct ProbeSet {
    tables: Vec<ProbeTable>,
    by_entity_model: BTreeMap<(String, String), Vec<usize>>,
}

/// Identifies the distribution of one entity under one model in one language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityKey {
    pub model_id: String,
    pub language: String,
    pub entity_id: String,
}

impl ProbeSet {
    /// Builds a set from tables, enforcing key uniqueness and sorting entries.
    pub fn from_tables(tables: Vec<ProbeTable>) -> Result<Self> {
        let mut set = ProbeSet::default();
        let mut keys = HashSet::new();
        for mut table in tables {
            if !keys.insert(table.key()) {
                return Err(duplicate(&table));
            }
            validate_entries(&table, 0)?;
            table.sort_entries();
            set.push(table);
        }
        Ok(set)
    }

    fn push(&mut self, table: ProbeTable) {
        let idx = self.tables.len();
        self.by_entity_model
            .entry((table.entity_id.clone(), table.model_id.clone()))
            .or_default()
            .push(idx);
        self.tables.push(table);
    }

    pub fn tables(&self) -> &[ProbeTable] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// All tables for an (entity, model) pair, across slots and languages.
    pub fn tables_for(&self, entity_id: &str, model_id: &str) -> Vec<&ProbeTable> {
        self.by_entity_model
            .get(&(entity_id.to_string(), model_id.to_string()))
            .map(|idx| idx.iter().map(|&i| &self.tables[i]).collect())
            .unwrap_or_default()
    }

    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.tables.iter().map(|t| t.model_id.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn languages(&self) -> Vec<String> {
        let mut l: Vec<String> = self.tables.iter().map(|t| t.language.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    /// Groups tables by (model, language, entity), combining slots per `mode`.
    ///
    /// Each group yields the entity gender and a token -> mass map. Tokens
    /// present in more than one included slot accumulate their probabilities.
    pub fn entity_distributions(
        &self,
        mode: SlotMode,
    ) -> BTreeMap<EntityKey, (GenderClass, BTreeMap<String, f64>)> {
        let mut out: BTreeMap<EntityKey, (GenderClass, BTreeMap<String, f64>)> = BTreeMap::new();
        for t in self.tables.iter().filter(|t| mode.includes(t.slot)) {
            let key = EntityKey {
                model_id: t.model_id.clone(),
                language: t.language.clone(),
                entity_id: t.entity_id.clone(),
            };
            let slot = out.entry(key).or_insert_with(|| (t.gender, BTreeMap::new()));
            for e in &t.entries {
                *slot.1.entry(e.token.clone()).or_insert(0.0) += e.prob;
            }
        }
        out
    }
}

fn duplicate(t: &ProbeTable) -> Error {
    Error::DuplicateProbe {
        model_id: t.model_id.clone(),
        entity_id: t.entity_id.clone(),
        slot: t.slot.to_string(),
        language: t.language.clone(),
    }
}

fn validate_entries(t: &ProbeTable, line: usize) -> Result<()> {
    for e in &t.entries {
        if !e.prob.is_finite() || !(0.0..=1.0).contains(&e.prob) {
            return Err(Error::InvalidProbability {
                line,
                token: e.token.clone(),
                value: e.prob,
            });
        }
    }
    Ok(())
}

/// Parses probe JSON Lines from a reader.
pub fn parse_probe_set<R: BufRead>(reader: R) -> Result<ProbeSet> {
    let mut set = ProbeSet::default();
    let mut keys = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut table: ProbeTable = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        validate_entries(&table, line_no)?;
        if !keys.insert(table.key()) {
            return Err(duplicate(&table));
        }
        table.sort_entries();
        set.push(table);
    }
    Ok(set)
}

pub fn read_probe_set(path: &Path) -> Result<ProbeSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_probe_set(std::io::BufReader::new(file))
}

pub fn read_politicians(path: &Path) -> Result<PoliticianParse> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_politicians(std::io::BufReader::new(file))
}

/// Serializes a probe set in canonical form, one table per line.
pub fn write_probe_set_to<W: Write>(set: &ProbeSet, mut w: W) -> Result<()> {
    for t in set.tables() {
        let line = serde_json::to_string(t)?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io("<probe writer>", e))?;
    }
    Ok(())
}

pub fn write_probe_set(set: &ProbeSet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_probe_set_to(set, &mut buf)?;
    util::write_atomic(path, &buf)
}
