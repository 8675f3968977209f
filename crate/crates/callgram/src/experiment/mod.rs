//! Sweep orchestration: run every (variant, length, seed) cell of the
//! experiment grid, aggregate per-seed results, and emit reports.
//!
//! Each cell re-derives all of its randomness from `(seed, variant, ℓ)`,
//! so any cell recomputed in isolation matches its value from a full
//! sweep, and completed cells can be skipped on resume via a content
//! hash over everything that could change their value.

mod config;
mod report;
mod synth;

pub use config::{ConfigFile, CorpusSource, ResolvedConfig};
pub use report::emit_report;
pub use synth::{generate_synthetic_corpus, write_synthetic_corpus, SyntheticSpec};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{stratified_split, ApiTrace, Corpus, CorpusError};
use crate::eval::{
    evaluate_scores, pr_curve, roc_curve, CurvePoints, EvalError, MetricsReport,
};
use crate::featurize::{
    featurize_corpus, FeatureVocabs, FeaturizeError, LengthThreshold, Variant, VocabSet,
};
use crate::forest::{predict_proba, train_forest, ForestError, ForestParams};
use crate::rng::{derive_seed, RNG_ALGORITHM};

/// Hard decision threshold used for every cell's confusion metrics.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// The paper-scale sweep grid: fourteen truncation lengths.
pub const DEFAULT_LENGTHS: [usize; 14] = [
    50, 100, 150, 200, 250, 500, 750, 1000, 2500, 5000, 7500, 10000, 20000, 100000,
];

/// Default seeds for the three-run protocol.
pub const DEFAULT_SEEDS: [u64; 3] = [42, 21, 63];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("cell (variant={variant}, length={length}, seed={seed}) failed: {message}")]
    Cell {
        variant: Variant,
        length: usize,
        seed: u64,
        message: String,
    },
    #[error("{} cell(s) failed; successful cells retained", failures.len())]
    PartialSweep {
        completed: Box<SweepResult>,
        failures: Vec<CellFailure>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where a vocabulary is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabScope {
    /// Training split only (no test-set leakage); the default.
    Train,
    /// Whole corpus, reproducing dataset-wide distinct-gram counts.
    Dataset,
}

/// The full grid an experiment runs over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    pub lengths: Vec<LengthThreshold>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    /// Per-cell forests clone these params with a derived seed.
    pub forest: ForestParams,
    pub vocab_scope: VocabScope,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: Variant::ALL.to_vec(),
            lengths: DEFAULT_LENGTHS
                .iter()
                .map(|&l| LengthThreshold::new(l).unwrap())
                .collect(),
            seeds: DEFAULT_SEEDS.to_vec(),
            train_fraction: 0.75,
            forest: ForestParams::default(),
            vocab_scope: VocabScope::Train,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |detail: String| ExperimentError::InvalidConfig(detail);
        if self.variants.is_empty() {
            return Err(invalid("no variants selected".to_string()));
        }
        let mut seen_variants = std::collections::HashSet::new();
        for variant in &self.variants {
            if !seen_variants.insert(variant) {
                return Err(invalid(format!("variant {variant} listed twice")));
            }
        }
        if self.lengths.is_empty() {
            return Err(invalid("no lengths selected".to_string()));
        }
        if !self.lengths.windows(2).all(|pair| pair[0] < pair[1]) {
            return Err(invalid("lengths must be strictly increasing".to_string()));
        }
        if self.seeds.is_empty() {
            return Err(invalid("no seeds selected".to_string()));
        }
        let mut seen_seeds = std::collections::HashSet::new();
        for seed in &self.seeds {
            if !seen_seeds.insert(seed) {
                return Err(invalid(format!("seed {seed} listed twice")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.forest.n_trees == 0 {
            return Err(invalid("forest needs at least one tree".to_string()));
        }
        if self.forest.min_samples_split < 2 {
            return Err(invalid("min_samples_split must be at least 2".to_string()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.variants.len() * self.lengths.len() * self.seeds.len()
    }
}

/// One completed cell of the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub variant: Variant,
    pub length: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub roc: CurvePoints,
    pub pr: CurvePoints,
    /// Fingerprints of this seed's (unigram, bigram, trigram) vocabularies.
    pub seed_vocab_fingerprints: [String; 3],
}

/// A failed cell, with the error flattened to text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub variant: Variant,
    pub length: usize,
    pub seed: u64,
    pub message: String,
}

/// Run identity and environment captured alongside the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software_version: String,
    pub config_hash: String,
    pub corpus_fingerprint: String,
    pub rng_algorithm: String,
    pub decision_threshold: f64,
    pub vocab_scope: VocabScope,
    pub train_fraction: f64,
    /// Per-seed (unigram, bigram, trigram) vocabulary fingerprints.
    pub seed_vocabularies: BTreeMap<String, [String; 3]>,
    /// Unix timestamp of the run; the only timestamp in any output.
    pub generated_at_unix: u64,
}

/// Metric records for every completed cell, plus provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellRecord>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes =
            serde_json::to_vec_pretty(self).expect("sweep result serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ExperimentError> {
        serde_json::from_slice(bytes)
            .map_err(|e| ExperimentError::InvalidConfig(format!("bad sweep result: {e}")))
    }

    pub fn cell(&self, variant: Variant, length: usize, seed: u64) -> Option<&CellRecord> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.length == length && c.seed == seed)
    }
}

/// Mean / sample stddev / CV% of one metric over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    pub stddev: f64,
    pub cv_pct: f64,
    /// False for single-seed groups, where stddev is reported as 0.
    pub stddev_defined: bool,
    /// False when the mean is 0 and CV is reported as 0.
    pub cv_defined: bool,
}

/// Aggregate one metric's per-seed values.
pub fn aggregate_values(values: &[f64]) -> MetricAggregate {
    assert!(!values.is_empty(), "cannot aggregate zero values");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (stddev, stddev_defined) = if values.len() >= 2 {
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (variance.sqrt(), true)
    } else {
        (0.0, false)
    };
    let (cv_pct, cv_defined) = if mean > 0.0 {
        (100.0 * stddev / mean, stddev_defined)
    } else {
        (0.0, false)
    };
    MetricAggregate {
        mean,
        stddev,
        cv_pct,
        stddev_defined,
        cv_defined,
    }
}

/// Aggregates for every metric of one (variant, length) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateGroup {
    pub variant: Variant,
    pub length: usize,
    pub n_seeds: usize,
    pub accuracy: MetricAggregate,
    pub precision: MetricAggregate,
    pub recall: MetricAggregate,
    pub f1: MetricAggregate,
    pub roc_auc: MetricAggregate,
}

/// Per-(variant, length) aggregates over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub groups: Vec<AggregateGroup>,
}

/// Group sweep cells by (variant, length) and aggregate over seeds.
pub fn aggregate_runs(result: &SweepResult) -> AggregateResult {
    let mut grouped: BTreeMap<(u8, usize), Vec<&CellRecord>> = BTreeMap::new();
    for cell in &result.cells {
        grouped
            .entry((cell.variant.code(), cell.length))
            .or_default()
            .push(cell);
    }
    let groups = grouped
        .into_values()
        .map(|mut cells| {
            cells.sort_by_key(|c| c.seed);
            let collect = |f: fn(&MetricsReport) -> f64| -> Vec<f64> {
                cells.iter().map(|c| f(&c.metrics)).collect()
            };
            AggregateGroup {
                variant: cells[0].variant,
                length: cells[0].length,
                n_seeds: cells.len(),
                accuracy: aggregate_values(&collect(|m| m.accuracy)),
                precision: aggregate_values(&collect(|m| m.precision)),
                recall: aggregate_values(&collect(|m| m.recall)),
                f1: aggregate_values(&collect(|m| m.f1)),
                roc_auc: aggregate_values(&collect(|m| m.roc_auc)),
            }
        })
        .collect();
    AggregateResult { groups }
}

/// Content hash identifying a corpus: ids, labels, and full call data.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"callgram-corpus/v1\n");
    for trace in corpus.traces() {
        hasher.update(trace.sample_id.as_bytes());
        hasher.update([trace.label.map_or(0xff, |l| l.as_index() as u8)]);
        hasher.update((trace.calls.len() as u64).to_le_bytes());
        for call in &trace.calls {
            hasher.update(call.as_str().as_bytes());
            hasher.update([0x1f]);
        }
    }
    hex::encode(hasher.finalize())
}

fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serialization cannot fail");
    hex::encode(Sha256::digest(canonical))
}

/// Everything affecting one cell's value, hashed into its cache key.
fn cell_cache_key(
    corpus_fp: &str,
    config: &ExperimentConfig,
    variant: Variant,
    length: LengthThreshold,
    seed: u64,
) -> String {
    let forest = ForestParams {
        seed: 0,
        ..config.forest.clone()
    };
    let canonical = format!(
        "callgram-cell/v{}|corpus={corpus_fp}|fraction={:?}|forest={}|scope={:?}|threshold={:?}|seed={seed}|variant={variant}|length={length}",
        env!("CARGO_PKG_VERSION"),
        config.train_fraction,
        serde_json::to_string(&forest).expect("params serialize"),
        config.vocab_scope,
        DECISION_THRESHOLD,
    );
    hex::encode(Sha256::digest(canonical))
}

/// Forest seed for one cell, derived from (seed, variant, length).
fn cell_forest_seed(seed: u64, variant: Variant, length: LengthThreshold) -> u64 {
    let stream = derive_seed(seed, 0x464f_5245_5354);
    let with_variant = derive_seed(stream, variant.code() as u64 + 1);
    derive_seed(with_variant, length.get() as u64)
}

/// Per-seed state shared by every cell of that seed: the split and the
/// vocabularies (built once at unlimited truncation, reused for all
/// lengths and variants).
struct SeedContext<'c> {
    train: Vec<&'c ApiTrace>,
    test: Vec<&'c ApiTrace>,
    vocabs: VocabSet,
}

impl<'c> SeedContext<'c> {
    fn build(
        corpus: &'c Corpus,
        config: &ExperimentConfig,
        seed: u64,
    ) -> Result<Self, ExperimentError> {
        let labeled = corpus.labeled_ids();
        let split = stratified_split(&labeled, config.train_fraction, seed)?;
        let train = corpus.select(&split.train_ids)?;
        let test = corpus.select(&split.test_ids)?;
        let vocabs = match config.vocab_scope {
            VocabScope::Train => VocabSet::build(&train, None)?,
            VocabScope::Dataset => {
                let all: Vec<&ApiTrace> = corpus.traces().iter().collect();
                VocabSet::build(&all, None)?
            }
        };
        Ok(SeedContext {
            train,
            test,
            vocabs,
        })
    }

    fn fingerprints(&self) -> [String; 3] {
        [
            self.vocabs.uni.fingerprint().to_string(),
            self.vocabs.bi.fingerprint().to_string(),
            self.vocabs.tri.fingerprint().to_string(),
        ]
    }
}

fn run_cell_in_context(
    context: &SeedContext<'_>,
    config: &ExperimentConfig,
    variant: Variant,
    length: LengthThreshold,
    seed: u64,
) -> Result<CellRecord, ExperimentError> {
    let train_matrix = featurize_corpus(
        &context.train,
        length,
        FeatureVocabs::for_variant(variant, &context.vocabs),
    )?;
    let test_matrix = featurize_corpus(
        &context.test,
        length,
        FeatureVocabs::for_variant(variant, &context.vocabs),
    )?;

    let params = ForestParams {
        seed: cell_forest_seed(seed, variant, length),
        ..config.forest.clone()
    };
    let model = train_forest(&train_matrix, &params)?;

    let scores: Result<Vec<f64>, ForestError> = (0..test_matrix.n_rows())
        .into_par_iter()
        .map(|row| predict_proba(&model, &test_matrix.row_dense(row)))
        .collect();
    let scores = scores?;
    let actual = test_matrix.labels();

    let metrics = evaluate_scores(&scores, actual, DECISION_THRESHOLD)?;
    let roc = roc_curve(&scores, actual)?;
    let pr = pr_curve(&scores, actual)?;

    Ok(CellRecord {
        variant,
        length: length.get(),
        seed,
        metrics,
        roc,
        pr,
        seed_vocab_fingerprints: context.fingerprints(),
    })
}

/// Run a single cell in isolation.
///
/// Rebuilds the seed's split and vocabularies from scratch; the result
/// is identical to the same cell inside a full sweep.
pub fn run_cell(
    corpus: &Corpus,
    config: &ExperimentConfig,
    variant: Variant,
    length: LengthThreshold,
    seed: u64,
) -> Result<CellRecord, ExperimentError> {
    let attach = |e: ExperimentError| ExperimentError::Cell {
        variant,
        length: length.get(),
        seed,
        message: e.to_string(),
    };
    let context = SeedContext::build(corpus, config, seed).map_err(attach)?;
    run_cell_in_context(&context, config, variant, length, seed).map_err(attach)
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn read_cached_cell(path: &Path) -> Option<CellRecord> {
    let bytes = std::fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

fn write_cached_cell(path: &Path, cell: &CellRecord) -> Result<(), ExperimentError> {
    let parent = path.parent().expect("cache paths have parents");
    std::fs::create_dir_all(parent).map_err(|e| ExperimentError::Io {
        path: parent.to_path_buf(),
        source: e,
    })?;
    let tmp = path.with_extension("tmp");
    let mut bytes = serde_json::to_vec_pretty(cell).expect("cell serialization cannot fail");
    bytes.push(b'\n');
    std::fs::write(&tmp, bytes).map_err(|e| ExperimentError::Io {
        path: tmp.clone(),
        source: e,
    })?;
    std::fs::rename(&tmp, path).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Run the full grid.
///
/// With a cache directory, completed cells are skipped on resume: each
/// cell is stored under a hash of everything that could change its
/// value (corpus content, split fraction, forest params, vocabulary
/// scope, decision threshold, cell coordinates, software version). An
/// interrupted sweep rerun with the same inputs lands on the same
/// result as an uninterrupted one.
pub fn run_sweep(
    corpus: &Corpus,
    config: &ExperimentConfig,
    cache_dir: Option<&Path>,
) -> Result<SweepResult, ExperimentError> {
    config.validate()?;
    let corpus_fp = corpus_fingerprint(corpus);

    let mut cells: Vec<CellRecord> = Vec::with_capacity(config.cell_count());
    let mut failures: Vec<CellFailure> = Vec::new();
    let mut seed_vocabularies: BTreeMap<String, [String; 3]> = BTreeMap::new();

    for &seed in &config.seeds {
        // The context is expensive (split + three vocabularies); build
        // it lazily so fully cached seeds stay cheap.
        let mut context: Option<SeedContext<'_>> = None;
        for &variant in &config.variants {
            for &length in &config.lengths {
                let cache_path = cache_dir.map(|dir| {
                    dir.join("cells").join(format!(
                        "{}.json",
                        cell_cache_key(&corpus_fp, config, variant, length, seed)
                    ))
                });
                if let Some(cached) = cache_path.as_deref().and_then(read_cached_cell) {
                    seed_vocabularies
                        .entry(seed.to_string())
                        .or_insert_with(|| cached.seed_vocab_fingerprints.clone());
                    cells.push(cached);
                    continue;
                }

                if context.is_none() {
                    match SeedContext::build(corpus, config, seed) {
                        Ok(built) => {
                            seed_vocabularies
                                .insert(seed.to_string(), built.fingerprints());
                            context = Some(built);
                        }
                        Err(error) => {
                            // Without a context no cell of this seed can
                            // run; fail them all and move on.
                            failures.push(CellFailure {
                                variant,
                                length: length.get(),
                                seed,
                                message: error.to_string(),
                            });
                            continue;
                        }
                    }
                }
                let context = context.as_ref().expect("context built above");
                match run_cell_in_context(context, config, variant, length, seed) {
                    Ok(cell) => {
                        if let Some(path) = &cache_path {
                            write_cached_cell(path, &cell)?;
                        }
                        cells.push(cell);
                    }
                    Err(error) => failures.push(CellFailure {
                        variant,
                        length: length.get(),
                        seed,
                        message: error.to_string(),
                    }),
                }
            }
        }
    }

    cells.sort_by_key(|c| (c.variant.code(), c.length, c.seed));
    failures.sort_by_key(|f| (f.variant.code(), f.length, f.seed));

    let result = SweepResult {
        cells,
        provenance: Provenance {
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config),
            corpus_fingerprint: corpus_fp,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            decision_threshold: DECISION_THRESHOLD,
            vocab_scope: config.vocab_scope,
            train_fraction: config.train_fraction,
            seed_vocabularies,
            generated_at_unix: unix_now(),
        },
    };

    if failures.is_empty() {
        Ok(result)
    } else {
        Err(ExperimentError::PartialSweep {
            completed: Box::new(result),
            failures,
        })
    }
}

#[cfg(test)]
mod tests;
