//! Hybrid retrieval over a library of agent skills.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`] ingests a directory of downloaded skill folders into a
//!   license-filtered, deduplicated manifest.
//! - [`query`] parses keyword queries (terms, `prefix*`, `"phrases"`,
//!   `AND`/`OR`/`NOT`, grouping).
//! - [`lexical`] is a field-weighted BM25 inverted index over name,
//!   description and content.
//! - [`dense`] holds embedding providers and the two-representation
//!   (metadata + content) vector index.
//! - [`fusion`] combines ranked lists with weighted Reciprocal Rank Fusion.
//! - [`engine`] binds a corpus and both indexes into one searchable snapshot.
//! - [`service`] exposes the snapshot over HTTP and renders the
//!   finding-skills tool document.
//! - [`eval`] computes Recall@k reports and weight sweeps.
//! - [`synth`] and [`bench`] generate large synthetic corpora and time them.

pub mod bench;
pub mod corpus;
pub mod dense;
pub mod engine;
pub mod eval;
pub mod fusion;
pub mod lexical;
pub mod query;
pub mod service;
pub mod synth;
pub mod text;

pub use corpus::{CorpusManifest, License, SkillRecord};
pub use dense::{DenseIndex, EmbeddingProvider, EmbeddingVector, HashEmbedder, SemanticConfig};
pub use engine::SearchEngine;
pub use fusion::{FusionConfig, RankedList, ScoreKind};
pub use lexical::{InvertedIndex, LexicalConfig};
pub use query::QueryAst;
