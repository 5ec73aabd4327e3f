//! Probing language models for gender bias toward named entities.
//!
//! The pipeline reads masked-LM predictions around entity names, keeps
//! adjective or verb lemmas, and measures gender association three ways:
//! PMI, a latent-sentiment generative model whose gender-specific
//! deviations are ranked per (gender, sentiment), and significance tests
//! over the sentiment of the top-ranked words.

pub mod config;
pub mod corpus;
pub mod error;
pub mod lexfusion;
pub mod lvm;
pub mod pipeline;
pub mod pmi;
pub mod report;
pub mod stats;
pub mod util;
pub mod vocabfilter;

pub use corpus::{GenderClass, PoliticianRecord, ProbeSet, ProbeTable, Slot};
pub use error::{Error, Result};
pub use lexfusion::{FusedLexicon, SentimentClass};
pub use lvm::{DeviationRanking, ModelParams, TrainConfig};
pub use vocabfilter::{FilteredProbeSet, PosClass, PosLexicon};
