//! Versioned binary model container.
//!
//! Little-endian layout, integrity-checked end to end:
//!
//! ```text
//! magic     "CGRF"
//! version   u16 (currently 1)
//! n_trees   u32
//! max_depth u32 (0 = unlimited)
//! min_split u32
//! rule      u8 (0 sqrt, 1 all, 2 fixed) + u32 fixed count
//! bootstrap u8
//! seed      u64
//! classes   2 bytes, class codes in encoding order (0, 1)
//! dim       u32
//! nfp       u8, then per fingerprint: u16 length + utf8 hex
//! meta      n_samples u64, class_counts 2×u64,
//!           rng: u16 length + utf8 name
//! trees     n_trees × (node_count u32, nodes preorder)
//!   node    tag u8: 0 leaf  -> counts 2×u64
//!                   1 inner -> feature u32, threshold f64,
//!                              left u32, right u32
//! checksum  sha256 of every preceding byte
//! ```
//!
//! Loading verifies magic, version, and checksum before structure, then
//! validates every index (features < dim, children inside the arena and
//! strictly after their parent), so arbitrary bytes cannot panic the
//! decoder or smuggle in an ill-formed tree.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bytesio::{put_f64, put_u16, put_u32, put_u64, ByteReader};
use crate::corpus::SampleLabel;

use super::{FeatureRule, ForestError, ForestModel, ForestParams, Tree, TreeNode, TrainingMetadata};

const MAGIC: &[u8; 4] = b"CGRF";
const VERSION: u16 = 1;
const CHECKSUM_LEN: usize = 32;

/// Smallest possible encoded node (a leaf): tag + two u64 counts.
const MIN_NODE_LEN: u64 = 17;

/// Encode a model to its binary container.
pub fn model_to_bytes(model: &ForestModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u16(&mut out, VERSION);
    put_u32(&mut out, model.params.n_trees as u32);
    put_u32(&mut out, model.params.max_depth.unwrap_or(0));
    put_u32(&mut out, model.params.min_samples_split as u32);
    let (rule_code, fixed) = match model.params.features_per_split {
        FeatureRule::Sqrt => (0u8, 0u32),
        FeatureRule::All => (1, 0),
        FeatureRule::Fixed(count) => (2, count as u32),
    };
    out.push(rule_code);
    put_u32(&mut out, fixed);
    out.push(model.params.bootstrap as u8);
    put_u64(&mut out, model.params.seed);
    for class in model.class_order {
        out.push(class.as_index() as u8);
    }
    put_u32(&mut out, model.feature_dimension as u32);
    out.push(model.vocab_fingerprints.len() as u8);
    for fingerprint in &model.vocab_fingerprints {
        put_u16(&mut out, fingerprint.len() as u16);
        out.extend_from_slice(fingerprint.as_bytes());
    }
    put_u64(&mut out, model.metadata.n_samples);
    put_u64(&mut out, model.metadata.class_counts[0]);
    put_u64(&mut out, model.metadata.class_counts[1]);
    put_u16(&mut out, model.metadata.rng_algorithm.len() as u16);
    out.extend_from_slice(model.metadata.rng_algorithm.as_bytes());

    for tree in &model.trees {
        put_u32(&mut out, tree.nodes.len() as u32);
        for node in &tree.nodes {
            match node {
                TreeNode::Leaf { class_counts } => {
                    out.push(0);
                    put_u64(&mut out, class_counts[0]);
                    put_u64(&mut out, class_counts[1]);
                }
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(1);
                    put_u32(&mut out, *feature);
                    put_f64(&mut out, *threshold);
                    put_u32(&mut out, *left);
                    put_u32(&mut out, *right);
                }
            }
        }
    }

    let checksum = Sha256::digest(&out);
    out.extend_from_slice(&checksum);
    out
}

/// Decode and validate a binary model.
pub fn model_from_bytes(bytes: &[u8]) -> Result<ForestModel, ForestError> {
    let corrupt = |detail: &str| ForestError::CorruptModel(detail.to_string());

    if bytes.len() < MAGIC.len() + 2 + CHECKSUM_LEN {
        return Err(corrupt("file is shorter than the fixed header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ForestError::VersionMismatch { found: version });
    }
    let (payload, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let computed = Sha256::digest(payload);
    if stored != computed.as_slice() {
        return Err(corrupt("checksum mismatch"));
    }

    let mut reader = ByteReader::new(payload);
    let short = |_| corrupt("truncated payload");
    reader.take(6).map_err(short)?; // magic + version, already checked

    let n_trees = reader.u32().map_err(short)? as usize;
    let max_depth = match reader.u32().map_err(short)? {
        0 => None,
        depth => Some(depth),
    };
    let min_samples_split = reader.u32().map_err(short)? as usize;
    if min_samples_split < 2 {
        return Err(corrupt("min_samples_split below 2"));
    }
    let rule_code = reader.u8().map_err(short)?;
    let fixed = reader.u32().map_err(short)? as usize;
    let features_per_split = match rule_code {
        0 => FeatureRule::Sqrt,
        1 => FeatureRule::All,
        2 if fixed >= 1 => FeatureRule::Fixed(fixed),
        2 => return Err(corrupt("fixed feature count of zero")),
        _ => return Err(corrupt("unknown feature rule")),
    };
    let bootstrap = match reader.u8().map_err(short)? {
        0 => false,
        1 => true,
        _ => return Err(corrupt("bad bootstrap flag")),
    };
    let seed = reader.u64().map_err(short)?;

    let mut class_order = [SampleLabel::Malware; 2];
    for slot in class_order.iter_mut() {
        let code = reader.u8().map_err(short)?;
        *slot = SampleLabel::from_index(code).ok_or_else(|| corrupt("bad class code"))?;
    }
    if class_order != SampleLabel::ALL {
        return Err(corrupt("unexpected class order"));
    }

    let feature_dimension = reader.u32().map_err(short)? as usize;
    let n_fingerprints = reader.u8().map_err(short)?;
    if !(1..=3).contains(&n_fingerprints) {
        return Err(corrupt("fingerprint count must be 1..=3"));
    }
    let mut vocab_fingerprints = Vec::with_capacity(n_fingerprints as usize);
    for _ in 0..n_fingerprints {
        let len = reader.u16().map_err(short)? as usize;
        let raw = reader.take(len).map_err(short)?;
        let text = std::str::from_utf8(raw).map_err(|_| corrupt("fingerprint is not utf-8"))?;
        vocab_fingerprints.push(text.to_string());
    }

    let n_samples = reader.u64().map_err(short)?;
    let class_counts = [reader.u64().map_err(short)?, reader.u64().map_err(short)?];
    let rng_len = reader.u16().map_err(short)? as usize;
    let rng_raw = reader.take(rng_len).map_err(short)?;
    let rng_algorithm = std::str::from_utf8(rng_raw)
        .map_err(|_| corrupt("rng name is not utf-8"))?
        .to_string();

    if n_trees == 0 {
        return Err(corrupt("model has no trees"));
    }
    let mut trees = Vec::with_capacity(n_trees.min(1 << 20));
    for _ in 0..n_trees {
        let node_count = reader.u32().map_err(short)? as usize;
        if node_count == 0 {
            return Err(corrupt("tree has no nodes"));
        }
        if (node_count as u64) * MIN_NODE_LEN > reader.remaining() as u64 {
            return Err(corrupt("node count exceeds remaining payload"));
        }
        let mut nodes = Vec::with_capacity(node_count);
        for index in 0..node_count {
            let tag = reader.u8().map_err(short)?;
            let node = match tag {
                0 => {
                    let counts = [reader.u64().map_err(short)?, reader.u64().map_err(short)?];
                    if counts[0] == 0 && counts[1] == 0 {
                        return Err(corrupt("leaf with zero class counts"));
                    }
                    TreeNode::Leaf {
                        class_counts: counts,
                    }
                }
                1 => {
                    let feature = reader.u32().map_err(short)?;
                    let threshold = reader.f64().map_err(short)?;
                    let left = reader.u32().map_err(short)?;
                    let right = reader.u32().map_err(short)?;
                    if feature as usize >= feature_dimension {
                        return Err(corrupt("feature index out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(corrupt("non-finite threshold"));
                    }
                    // Preorder arenas keep children strictly after the
                    // parent; this also rules out traversal cycles.
                    let in_range = |child: u32| {
                        (child as usize) < node_count && child as usize > index
                    };
                    if !in_range(left) || !in_range(right) {
                        return Err(corrupt("child index out of range"));
                    }
                    TreeNode::Internal {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                }
                _ => return Err(corrupt("unknown node tag")),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    if !reader.is_exhausted() {
        return Err(corrupt("trailing bytes after the last tree"));
    }

    Ok(ForestModel {
        trees,
        params: ForestParams {
            n_trees,
            max_depth,
            min_samples_split,
            features_per_split,
            bootstrap,
            seed,
        },
        class_order,
        feature_dimension,
        vocab_fingerprints,
        metadata: TrainingMetadata {
            seed,
            n_samples,
            class_counts,
            rng_algorithm,
        },
    })
}

/// Write a model file; `load_model(save_model(m))` predicts identically.
pub fn save_model(model: &ForestModel, path: &Path) -> Result<(), ForestError> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| ForestError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read and validate a model file.
pub fn load_model(path: &Path) -> Result<ForestModel, ForestError> {
    let bytes = std::fs::read(path).map_err(|e| ForestError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    model_from_bytes(&bytes)
}
