//! TOML experiment configuration.
//!
//! Every `ExperimentConfig` field (plus the corpus source and output
//! paths) lives in one file; command-line flags override file values.
//!
//! ```toml
//! [experiment]
//! variants = ["unigram", "bigram", "trigram", "combined"]
//! lengths = [50, 100, 250, 1000]
//! seeds = [42, 21, 63]
//! train_fraction = 0.75
//! vocab_scope = "train"
//!
//! [forest]
//! n_trees = 100
//! max_depth = 0            # 0 = unlimited
//! min_samples_split = 2
//! bootstrap = true
//! features_per_split = "sqrt"   # "sqrt" | "all" | integer
//!
//! [corpus]                 # either on-disk paths ...
//! traces = "data/traces"
//! manifest = "data/manifest.csv"
//! strict_missing = false
//! calls_path = "api_calls"
//!
//! [corpus.synthetic]       # ... or a generated corpus
//! n_samples = 1000
//! benign_fraction = 0.03
//! divergence = 0.5
//! seed = 7
//!
//! [output]
//! dir = "reports"
//! cache = true
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::{load_corpus, Corpus, LoadOptions, TraceLayout};
use crate::featurize::{LengthThreshold, Variant};
use crate::forest::{FeatureRule, ForestParams};

use super::synth::{generate_synthetic_corpus, SyntheticSpec};
use super::{ExperimentConfig, ExperimentError, VocabScope, DEFAULT_LENGTHS, DEFAULT_SEEDS};

fn invalid(detail: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidConfig(detail.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    forest: ForestSection,
    #[serde(default)]
    corpus: CorpusSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    variants: Option<Vec<String>>,
    lengths: Option<Vec<usize>>,
    seeds: Option<Vec<u64>>,
    train_fraction: Option<f64>,
    vocab_scope: Option<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            variants: None,
            lengths: None,
            seeds: None,
            train_fraction: None,
            vocab_scope: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
enum FeatureRuleField {
    Named(String),
    Count(usize),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestSection {
    n_trees: Option<usize>,
    /// 0 means unlimited.
    max_depth: Option<u32>,
    min_samples_split: Option<usize>,
    bootstrap: Option<bool>,
    features_per_split: Option<FeatureRuleField>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSection {
    traces: Option<PathBuf>,
    manifest: Option<PathBuf>,
    strict_missing: Option<bool>,
    /// Dotted key path to the call array inside trace files.
    calls_path: Option<String>,
    synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    cache: Option<bool>,
}

/// Where the corpus comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSource {
    OnDisk {
        traces: PathBuf,
        manifest: PathBuf,
        strict_missing: bool,
        calls_path: Option<String>,
    },
    Synthetic(SyntheticSpec),
}

impl CorpusSource {
    pub fn load(&self) -> Result<Corpus, ExperimentError> {
        match self {
            CorpusSource::OnDisk {
                traces,
                manifest,
                strict_missing,
                calls_path,
            } => {
                let layout = match calls_path {
                    Some(path) => TraceLayout::with_calls_path(path),
                    None => TraceLayout::default(),
                };
                let options = LoadOptions {
                    layout,
                    strict_missing: *strict_missing,
                    ..LoadOptions::default()
                };
                load_corpus(traces, manifest, &options).map_err(ExperimentError::from)
            }
            CorpusSource::Synthetic(spec) => generate_synthetic_corpus(spec),
        }
    }
}

/// A fully validated configuration ready to run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub experiment: ExperimentConfig,
    pub corpus: CorpusSource,
    pub output_dir: PathBuf,
    pub cache: bool,
}

impl ConfigFile {
    pub fn parse(bytes: &[u8]) -> Result<Self, ExperimentError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| invalid("config file is not valid UTF-8"))?;
        toml::from_str(text).map_err(|e| invalid(format!("bad config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let bytes = std::fs::read(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        ConfigFile::parse(&bytes)
    }

    pub fn resolve(self) -> Result<ResolvedConfig, ExperimentError> {
        let variants = match self.experiment.variants {
            None => Variant::ALL.to_vec(),
            Some(names) => names
                .iter()
                .map(|name| {
                    Variant::parse(name).ok_or_else(|| invalid(format!("unknown variant {name:?}")))
                })
                .collect::<Result<_, _>>()?,
        };
        let lengths = self
            .experiment
            .lengths
            .unwrap_or_else(|| DEFAULT_LENGTHS.to_vec())
            .into_iter()
            .map(|l| LengthThreshold::new(l).ok_or_else(|| invalid("lengths must be >= 1")))
            .collect::<Result<Vec<_>, _>>()?;
        let seeds = self.experiment.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        let vocab_scope = match self.experiment.vocab_scope.as_deref() {
            None | Some("train") => VocabScope::Train,
            Some("dataset") => VocabScope::Dataset,
            Some(other) => return Err(invalid(format!("unknown vocab_scope {other:?}"))),
        };

        let defaults = ForestParams::default();
        let features_per_split = match self.forest.features_per_split {
            None => defaults.features_per_split,
            Some(FeatureRuleField::Named(name)) => match name.as_str() {
                "sqrt" => FeatureRule::Sqrt,
                "all" => FeatureRule::All,
                other => return Err(invalid(format!("unknown feature rule {other:?}"))),
            },
            Some(FeatureRuleField::Count(count)) => {
                if count == 0 {
                    return Err(invalid("features_per_split must be >= 1"));
                }
                FeatureRule::Fixed(count)
            }
        };
        let forest = ForestParams {
            n_trees: self.forest.n_trees.unwrap_or(defaults.n_trees),
            max_depth: match self.forest.max_depth {
                None | Some(0) => None,
                Some(depth) => Some(depth),
            },
            min_samples_split: self
                .forest
                .min_samples_split
                .unwrap_or(defaults.min_samples_split),
            features_per_split,
            bootstrap: self.forest.bootstrap.unwrap_or(defaults.bootstrap),
            seed: 0,
        };

        let experiment = ExperimentConfig {
            variants,
            lengths,
            seeds,
            train_fraction: self.experiment.train_fraction.unwrap_or(0.75),
            forest,
            vocab_scope,
        };
        experiment.validate()?;

        let corpus = match (self.corpus.traces, self.corpus.manifest, self.corpus.synthetic) {
            (Some(traces), Some(manifest), None) => CorpusSource::OnDisk {
                traces,
                manifest,
                strict_missing: self.corpus.strict_missing.unwrap_or(false),
                calls_path: self.corpus.calls_path,
            },
            (None, None, Some(spec)) => {
                spec.validate()?;
                CorpusSource::Synthetic(spec)
            }
            (None, None, None) => {
                return Err(invalid(
                    "config needs either [corpus] traces+manifest or [corpus.synthetic]",
                ))
            }
            _ => {
                return Err(invalid(
                    "choose one corpus source: traces+manifest or [corpus.synthetic], not both",
                ))
            }
        };

        Ok(ResolvedConfig {
            experiment,
            corpus,
            output_dir: self.output.dir.unwrap_or_else(|| PathBuf::from("reports")),
            cache: self.output.cache.unwrap_or(true),
        })
    }
}
