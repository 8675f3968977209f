//! Order-invariant malware detection over Windows API call traces.
//!
//! `callgram` turns per-sample API call traces into n-gram frequency
//! vectors (unigram, bigram, trigram, or all three concatenated), trains
//! random forests on them, and evaluates the result with imbalance-aware
//! metrics. A sweep harness runs the full grid of
//! (variant, call-length threshold, seed) cells, aggregates per-seed
//! results, and emits CSV reports plus ROC/PR curve data.
//!
//! Everything downstream of trace ingestion is deterministic: shuffles and
//! bootstrap draws come from a seeded portable generator, n-gram indices
//! are assigned lexicographically, and parallel code paths order results
//! by input position, never by completion time.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpus`] — trace/manifest parsing, single-label filtering,
//!   stratified train/test splitting.
//! - [`featurize`] — n-gram vocabularies and count vectors under a
//!   call-length truncation threshold.
//! - [`forest`] — Gini-impurity decision trees with bootstrap
//!   aggregation, plus a versioned binary model format.
//! - [`eval`] — confusion-matrix metrics, rank-based ROC-AUC, ROC and
//!   precision-recall curve points.
//! - [`experiment`] — sweep orchestration, per-seed aggregation,
//!   synthetic corpus generation, and report emission.

mod bytesio;

pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod featurize;
pub mod forest;
pub mod rng;

pub use corpus::{ApiCallName, ApiTrace, CorpusError, DatasetSplit, SampleLabel, Sha256Id};
pub use eval::{ConfusionMatrix, CurvePoints, EvalError, MetricsReport};
pub use experiment::{ExperimentConfig, ExperimentError, SweepResult, SyntheticSpec};
pub use featurize::{
    FeatureMatrix, FeatureVector, FeaturizeError, LengthThreshold, NGramVocabulary, Variant,
    VocabSet,
};
pub use forest::{ForestError, ForestModel, ForestParams};
