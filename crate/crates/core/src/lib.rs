//! Document coverage prediction for relation extraction.
//!
//! Given a document, an entity and a relation, predict whether the document
//! yields many of the entity's relational facts when fed to an extractor, and
//! use those predictions to rank documents, schedule extraction under a time
//! budget, and flag dubious low-support claims.
//!
//! Modules follow the pipeline:
//!
//! - [`corpus`]: documents, extraction tuples, ground truths, masking
//! - [`coverage`]: per-document coverage, binarization, splits, undersampling
//! - [`features`]: the six cheap heuristic signals and heuristic classifiers
//! - [`vectorize`]: TF-IDF n-gram vectors and the external embedding store
//! - [`model`]: logistic regression with Adam, the stacked ensemble and HERB
//! - [`eval`]: optimal F1, nDCG, Pearson correlation
//! - [`apps`]: document ranking, budgeted extraction, claim refutation
//! - [`synthgen`]: seeded synthetic corpora with a planted coverage signal
//! - [`cli`]: the `covrank` command line

pub mod apps;
pub mod cli;
pub mod corpus;
pub mod coverage;
pub mod error;
pub mod eval;
pub mod features;
pub mod jsonl;
pub mod model;
pub mod pipeline;
pub mod synthgen;
pub mod text;
pub mod vectorize;

pub use error::{Error, Result};
