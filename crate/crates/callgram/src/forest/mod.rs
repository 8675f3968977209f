//! Random forest classification: Gini-impurity decision trees with
//! bootstrap aggregation.
//!
//! Trees train independently on per-tree generators derived from the
//! base seed, so the same matrix and params produce a byte-identical
//! model on any thread count. Probabilities are soft votes: the mean
//! over trees of each reached leaf's benign fraction.

mod model_io;
mod split;

pub use model_io::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use split::{best_split, gini_impurity, SplitChoice};

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::SampleLabel;
use crate::featurize::FeatureMatrix;
use crate::rng::{derive_seed, seeded_rng, RNG_ALGORITHM};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("dimension mismatch: row has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot train on an empty feature matrix")]
    EmptyMatrix,
    #[error("gini impurity of an empty node is undefined")]
    EmptyNode,
    #[error("unsupported model version {found}")]
    VersionMismatch { found: u16 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// How many features each node considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureRule {
    /// `max(1, ⌊√D⌋)` features, sampled without replacement per node.
    Sqrt,
    /// Every feature at every node.
    All,
    /// A fixed count, clamped to the dimension.
    Fixed(usize),
}

impl FeatureRule {
    pub fn count_for(self, dimension: usize) -> usize {
        match self {
            FeatureRule::Sqrt => ((dimension as f64).sqrt().floor() as usize).max(1),
            FeatureRule::All => dimension,
            FeatureRule::Fixed(count) => count.clamp(1, dimension.max(1)),
        }
    }
}

/// Training hyperparameters, defaulting to the reference library's
/// classifier defaults (100 trees, unlimited depth, √D features,
/// bootstrap resampling).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub features_per_split: FeatureRule,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: FeatureRule::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        ForestParams {
            seed,
            ..ForestParams::default()
        }
    }
}

/// One tree node: an internal threshold test or a counted leaf.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf {
        /// Training rows that reached this leaf, per class.
        class_counts: [u64; 2],
    },
    Internal {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// A decision tree as a preorder node arena; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Benign fraction of the leaf this row lands in.
    pub fn leaf_fraction(&self, row: &[u32]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class_counts } => {
                    let total = class_counts[0] + class_counts[1];
                    return class_counts[1] as f64 / total as f64;
                }
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if (row[*feature as usize] as f64) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// Summary of the data a model was trained on.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub n_samples: u64,
    /// Training rows per class, encoding order (malware, benign).
    pub class_counts: [u64; 2],
    pub rng_algorithm: String,
}

/// A trained ensemble plus everything needed to apply it safely.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    /// Classes in encoding order.
    pub class_order: [SampleLabel; 2],
    pub feature_dimension: usize,
    pub vocab_fingerprints: Vec<String>,
    pub metadata: TrainingMetadata,
}

struct TreeBuilder<'a> {
    values: &'a [u32],
    dim: usize,
    classes: &'a [u8],
    params: &'a ForestParams,
    feature_count: usize,
}

impl TreeBuilder<'_> {
    fn value(&self, row: u32, feature: usize) -> u32 {
        self.values[row as usize * self.dim + feature]
    }

    fn build(&self, rng: &mut rand_chacha::ChaCha20Rng, rows: Vec<u32>) -> Tree {
        let mut nodes = Vec::new();
        let mut scratch = Vec::with_capacity(rows.len());
        self.grow(rng, rows, 0, &mut nodes, &mut scratch);
        Tree { nodes }
    }

    fn class_counts(&self, rows: &[u32]) -> [u64; 2] {
        let mut counts = [0u64; 2];
        for &row in rows {
            counts[self.classes[row as usize] as usize] += 1;
        }
        counts
    }

    /// Preorder construction: returns the new node's index.
    fn grow(
        &self,
        rng: &mut rand_chacha::ChaCha20Rng,
        rows: Vec<u32>,
        depth: u32,
        nodes: &mut Vec<TreeNode>,
        scratch: &mut Vec<(u32, u8)>,
    ) -> u32 {
        let index = nodes.len() as u32;
        let counts = self.class_counts(&rows);
        let pure = counts[0] == 0 || counts[1] == 0;
        let too_small = rows.len() < self.params.min_samples_split;
        let at_depth = self.params.max_depth.is_some_and(|limit| depth >= limit);

        if pure || too_small || at_depth {
            nodes.push(TreeNode::Leaf {
                class_counts: counts,
            });
            return index;
        }

        let candidates: Vec<usize> = if self.feature_count >= self.dim {
            (0..self.dim).collect()
        } else {
            let mut drawn: Vec<usize> =
                sample_indices(rng, self.dim, self.feature_count).into_iter().collect();
            drawn.sort_unstable();
            drawn
        };

        let choice = split::best_split_impl(
            &rows,
            &candidates,
            &|row, feature| self.value(row, feature),
            &|row| self.classes[row as usize] as usize,
            scratch,
        );
        let Some(choice) = choice else {
            nodes.push(TreeNode::Leaf {
                class_counts: counts,
            });
            return index;
        };

        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .into_iter()
            .partition(|&row| (self.value(row, choice.feature) as f64) <= choice.threshold);

        nodes.push(TreeNode::Internal {
            feature: choice.feature as u32,
            threshold: choice.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(rng, left_rows, depth + 1, nodes, scratch);
        let right = self.grow(rng, right_rows, depth + 1, nodes, scratch);
        match &mut nodes[index as usize] {
            TreeNode::Internal {
                left: l, right: r, ..
            } => {
                *l = left;
                *r = right;
            }
            TreeNode::Leaf { .. } => unreachable!("patched node is internal"),
        }
        index
    }
}

/// Train a random forest on a feature matrix.
///
/// Tree `t` draws its bootstrap resample and per-node feature subsets
/// from a generator seeded by `derive(params.seed, t)`; the result is
/// deterministic for fixed `(matrix, params)` regardless of scheduling.
pub fn train_forest(
    matrix: &FeatureMatrix,
    params: &ForestParams,
) -> Result<ForestModel, ForestError> {
    let n_rows = matrix.n_rows();
    if n_rows == 0 {
        return Err(ForestError::EmptyMatrix);
    }
    assert!(params.n_trees >= 1, "a forest needs at least one tree");
    assert!(
        params.min_samples_split >= 2,
        "min_samples_split must be at least 2"
    );

    let dim = matrix.dimension();
    let values = matrix.to_dense();
    let classes: Vec<u8> = matrix
        .labels()
        .iter()
        .map(|label| label.as_index() as u8)
        .collect();

    let mut class_counts = [0u64; 2];
    for &class in &classes {
        class_counts[class as usize] += 1;
    }
    if class_counts[0] == 0 || class_counts[1] == 0 {
        log::warn!("training data is single-class; the forest will always predict that class");
    }

    let builder = TreeBuilder {
        values: &values,
        dim,
        classes: &classes,
        params,
        feature_count: params.features_per_split.count_for(dim),
    };

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = seeded_rng(derive_seed(params.seed, tree_index as u64));
            let rows: Vec<u32> = if params.bootstrap {
                (0..n_rows)
                    .map(|_| rand::Rng::gen_range(&mut rng, 0..n_rows as u64) as u32)
                    .collect()
            } else {
                (0..n_rows as u32).collect()
            };
            builder.build(&mut rng, rows)
        })
        .collect();

    Ok(ForestModel {
        trees,
        params: params.clone(),
        class_order: SampleLabel::ALL,
        feature_dimension: dim,
        vocab_fingerprints: matrix.vocab_fingerprints().to_vec(),
        metadata: TrainingMetadata {
            seed: params.seed,
            n_samples: n_rows as u64,
            class_counts,
            rng_algorithm: RNG_ALGORITHM.to_string(),
        },
    })
}

/// Probability that a row is benign: mean over trees of the reached
/// leaf's benign fraction.
pub fn predict_proba(model: &ForestModel, row: &[u32]) -> Result<f64, ForestError> {
    if row.len() != model.feature_dimension {
        return Err(ForestError::DimensionMismatch {
            expected: model.feature_dimension,
            got: row.len(),
        });
    }
    let sum: f64 = model.trees.iter().map(|tree| tree.leaf_fraction(row)).sum();
    Ok(sum / model.trees.len() as f64)
}

/// Hard decision: benign iff `P(benign) >= threshold`.
pub fn predict(
    model: &ForestModel,
    row: &[u32],
    threshold: f64,
) -> Result<SampleLabel, ForestError> {
    let probability = predict_proba(model, row)?;
    Ok(if probability >= threshold {
        SampleLabel::Benign
    } else {
        SampleLabel::Malware
    })
}
