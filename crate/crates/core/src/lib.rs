//! Streaming microblog corpus to word embeddings.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`ingest`] reads JSON-lines message streams, slices them by UTC day and
//!   keeps the registry of message ids that may be redistributed.
//! * [`filter`] decides which messages enter the corpus (Cyrillic-run
//!   detection, function-word query, mention/link stripping).
//! * [`textprep`] turns a message into normalized token sentences.
//! * [`vocab`] builds the pruned dictionary, corpus statistics, subsampling
//!   probabilities and the negative-sampling noise distribution.
//! * [`trainer`] trains skip-gram or CBOW vectors with negative sampling.
//! * [`embeddings`] stores vectors and answers similarity queries.
//! * [`eval`] scores vectors against human-judgement word pairs.

pub mod config;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod filter;
pub mod ingest;
pub mod synthetic;
pub mod textprep;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
