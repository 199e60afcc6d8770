//! Span-based semantic parser for hierarchical intent-slot (TOP) trees.
//!
//! The pipeline: a small transformer encoder produces fence-boundary vectors,
//! a CKY chart decoder scores labeled spans (optionally enriched with the
//! split-point boundary), and training uses a loss-augmented margin objective.
//! A slot lexicon can be matched against utterances and injected into the
//! token embeddings, with a separate binary classifier filtering mismatched
//! occurrences. Lexicon entries can be added at runtime so the trained parser
//! handles unseen slot values without retraining.

pub mod cli;
pub mod datasim;
pub mod disambiguator;
pub mod encoder;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod numcore;
pub mod parser;
pub mod toycorpus;
pub mod treebank;

pub use error::{Error, Result};
