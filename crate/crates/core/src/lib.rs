//! Toolkit for building, classifying, and analyzing corpora of online
//! political ads.
//!
//! The pipeline goes from raw ad records to trained classifiers and lexical
//! statistics in file-based stages:
//!
//! 1. [`corpus`]: ingest ad/sponsor records, assign task labels from the
//!    sponsor registry, deduplicate, filter by language, split
//!    chronologically.
//! 2. [`preprocess`]: normalize ad text (placeholders, unknown-token
//!    thresholding, tokenization) and images (resize, scale to `[0,1]`).
//! 3. [`features`]: TF-IDF bag-of-n-grams vectors and per-ad unit-normalized
//!    unigram frequencies.
//! 4. [`models`]: weighted logistic regression, a small transformer text
//!    encoder, a small convolutional image encoder, and late-fusion
//!    classifiers trained with staged freeze/unfreeze schedules.
//! 5. [`eval`]: macro precision/recall/F1, majority baselines, multi-seed
//!    aggregation.
//! 6. [`lexstats`]: univariate Pearson correlation of unigram frequencies
//!    against labels with two-tailed t-test significance.
//!
//! The `polads` binary orchestrates the stages; see [`pipeline`].

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod lexstats;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
