//! N-gram vocabularies with lexicographic index assignment.
//!
//! A vocabulary is built from training traces only (dataset-wide
//! construction is the caller's explicit choice), optionally under a
//! truncation threshold. Indices are assigned by sorting the distinct
//! n-grams lexicographically, so rebuilding from the same traces always
//! reproduces the same mapping and fingerprint.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::{ApiCallName, ApiTrace};

use super::{truncate_trace, FeaturizeError, LengthThreshold, Variant};

/// A stable mapping from n-grams to feature indices `0..size`.
#[derive(Clone, Debug)]
pub struct NGramVocabulary {
    order: u8,
    grams: Vec<Box<[ApiCallName]>>,
    index: HashMap<Box<[ApiCallName]>, u32>,
    fingerprint: String,
}

impl PartialEq for NGramVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order && self.grams == other.grams
    }
}

impl NGramVocabulary {
    fn from_sorted_grams(order: u8, grams: Vec<Box<[ApiCallName]>>) -> Self {
        let index = grams
            .iter()
            .enumerate()
            .map(|(i, gram)| (gram.clone(), i as u32))
            .collect();
        let fingerprint = fingerprint_of(order, &grams);
        NGramVocabulary {
            order,
            grams,
            index,
            fingerprint,
        }
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn size(&self) -> usize {
        self.grams.len()
    }

    pub fn index_of(&self, gram: &[ApiCallName]) -> Option<u32> {
        self.index.get(gram).copied()
    }

    /// N-grams in index order (lexicographic).
    pub fn grams(&self) -> impl Iterator<Item = (&[ApiCallName], u32)> {
        self.grams
            .iter()
            .enumerate()
            .map(|(i, gram)| (gram.as_ref(), i as u32))
    }

    /// Hex digest over the sorted entry list.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Serialize to the vocabulary JSON layout.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let entries: Vec<VocabEntryFile> = self
            .grams()
            .map(|(gram, index)| VocabEntryFile {
                gram: gram.to_vec(),
                index,
            })
            .collect();
        let file = VocabFile {
            n: self.order,
            entries,
            fingerprint: self.fingerprint.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("vocab serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    /// Parse and validate a vocabulary file.
    ///
    /// Rejects out-of-range orders, wrong gram arity, unsorted or
    /// non-contiguous indices, and fingerprint mismatches.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, FeaturizeError> {
        let bad = |detail: String| FeaturizeError::BadVocabFile(detail);
        let file: VocabFile =
            serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        if !(1..=3).contains(&file.n) {
            return Err(bad(format!("order {} outside 1..=3", file.n)));
        }
        let mut grams = Vec::with_capacity(file.entries.len());
        for (position, entry) in file.entries.iter().enumerate() {
            if entry.index as usize != position {
                return Err(bad(format!(
                    "entry {position} has index {}, expected {position}",
                    entry.index
                )));
            }
            if entry.gram.len() != file.n as usize {
                return Err(bad(format!(
                    "entry {position} has arity {}, expected {}",
                    entry.gram.len(),
                    file.n
                )));
            }
            grams.push(entry.gram.clone().into_boxed_slice());
        }
        if !grams.windows(2).all(|pair| pair[0] < pair[1]) {
            return Err(bad("entries are not in strict lexicographic order".to_string()));
        }
        let vocab = NGramVocabulary::from_sorted_grams(file.n, grams);
        if vocab.fingerprint != file.fingerprint {
            return Err(bad(format!(
                "fingerprint mismatch: file says {}, entries hash to {}",
                file.fingerprint, vocab.fingerprint
            )));
        }
        Ok(vocab)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct VocabEntryFile {
    gram: Vec<ApiCallName>,
    index: u32,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct VocabFile {
    n: u8,
    entries: Vec<VocabEntryFile>,
    fingerprint: String,
}

fn fingerprint_of(order: u8, grams: &[Box<[ApiCallName]>]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("callgram-vocab/v1 n={order}\n"));
    for (i, gram) in grams.iter().enumerate() {
        for name in gram.iter() {
            hasher.update(name.as_str().as_bytes());
            hasher.update([0x1f]);
        }
        hasher.update([0x1e]);
        hasher.update(format!("{i}\n"));
    }
    hex::encode(hasher.finalize())
}

/// Build the order-`n` vocabulary over the given traces.
///
/// `truncation` limits each trace to its leading calls first; `None`
/// scans whole traces. Distinct n-grams are collected in parallel
/// partial sets, merged, and sorted, so the result is independent of
/// worker count.
pub fn build_ngram_vocab(
    traces: &[&ApiTrace],
    n: u8,
    truncation: Option<LengthThreshold>,
) -> Result<NGramVocabulary, FeaturizeError> {
    assert!((1..=3).contains(&n), "n-gram order must be 1, 2, or 3, got {n}");
    let distinct: HashSet<Box<[ApiCallName]>> = traces
        .par_iter()
        .fold(HashSet::new, |mut set, trace| {
            let calls = match truncation {
                Some(threshold) => truncate_trace(trace, threshold),
                None => trace.calls.as_slice(),
            };
            for window in calls.windows(n as usize) {
                if !set.contains(window) {
                    set.insert(window.to_vec().into_boxed_slice());
                }
            }
            set
        })
        .reduce(HashSet::new, |mut left, right| {
            left.extend(right);
            left
        });

    if distinct.is_empty() {
        return Err(FeaturizeError::EmptyVocabulary(n));
    }
    let mut grams: Vec<Box<[ApiCallName]>> = distinct.into_iter().collect();
    grams.sort_unstable();
    Ok(NGramVocabulary::from_sorted_grams(n, grams))
}

/// The unigram, bigram, and trigram vocabularies for one training split.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabSet {
    pub uni: NGramVocabulary,
    pub bi: NGramVocabulary,
    pub tri: NGramVocabulary,
}

impl VocabSet {
    /// Build all three vocabularies from the same traces.
    pub fn build(
        traces: &[&ApiTrace],
        truncation: Option<LengthThreshold>,
    ) -> Result<Self, FeaturizeError> {
        Ok(VocabSet {
            uni: build_ngram_vocab(traces, 1, truncation)?,
            bi: build_ngram_vocab(traces, 2, truncation)?,
            tri: build_ngram_vocab(traces, 3, truncation)?,
        })
    }

    /// Assemble from separately built vocabularies, checking orders.
    pub fn from_parts(
        uni: NGramVocabulary,
        bi: NGramVocabulary,
        tri: NGramVocabulary,
    ) -> Result<Self, FeaturizeError> {
        for (vocab, expected) in [(&uni, 1u8), (&bi, 2), (&tri, 3)] {
            if vocab.order() != expected {
                return Err(FeaturizeError::DimensionMismatch(format!(
                    "expected an order-{expected} vocabulary, got order {}",
                    vocab.order()
                )));
            }
        }
        Ok(VocabSet { uni, bi, tri })
    }

    pub fn combined_dimension(&self) -> usize {
        self.uni.size() + self.bi.size() + self.tri.size()
    }

    pub fn dimension(&self, variant: Variant) -> usize {
        match variant {
            Variant::Unigram => self.uni.size(),
            Variant::Bigram => self.bi.size(),
            Variant::Trigram => self.tri.size(),
            Variant::Combined => self.combined_dimension(),
        }
    }

    /// Fingerprints identifying the vocabularies behind a variant.
    pub fn fingerprints(&self, variant: Variant) -> Vec<String> {
        match variant {
            Variant::Unigram => vec![self.uni.fingerprint().to_string()],
            Variant::Bigram => vec![self.bi.fingerprint().to_string()],
            Variant::Trigram => vec![self.tri.fingerprint().to_string()],
            Variant::Combined => vec![
                self.uni.fingerprint().to_string(),
                self.bi.fingerprint().to_string(),
                self.tri.fingerprint().to_string(),
            ],
        }
    }
}
