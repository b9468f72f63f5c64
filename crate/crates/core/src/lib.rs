//! Thesaurus-augmented sparse retrieval and model-explanation toolkit.
//!
//! * [`analyzer`]: text normalization, tokenization, stopwords and stemming.
//! * [`index`]: inverted index with collection statistics and persistence.
//! * [`thesaurus`]: the relevance thesaurus, candidate generation and filtering.
//! * [`scoring`]: BM25, BM25T, query likelihood and its translation variant.
//! * [`alignment`]: attention aggregation and partial-segment sampling.
//! * [`training_data`]: supervision records, losses and the local-to-global builder.
//! * [`eval`]: effectiveness and fidelity metrics over TREC runs.
//! * [`probes`]: replacement-grid, postfix and year-sweep probes.

pub mod alignment;
pub mod analyzer;
pub mod error;
pub mod eval;
pub mod index;
pub mod probes;
pub mod scoring;
pub mod thesaurus;
pub mod training_data;
pub mod trec;

pub use error::{Error, Result};
