//! N-gram frequency featurization under a call-length threshold.
//!
//! A trace is truncated to its first `ℓ` calls, then counted against a
//! vocabulary of n-grams built from training traces. Unigram vectors are
//! order-invariant by construction: permuting the truncated prefix
//! leaves the counts unchanged. Bigram and trigram windows never cross
//! the truncation boundary.

mod matrix;
mod vocab;

pub use matrix::{featurize_corpus, FeatureMatrix, FeatureVocabs};
pub use vocab::{build_ngram_vocab, NGramVocabulary, VocabSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ApiCallName, ApiTrace, Sha256Id};

/// Errors raised while building vocabularies or feature matrices.
#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("no trace contains any n-gram of order {0}")]
    EmptyVocabulary(u8),
    #[error("sample {0} has no label; featurize_corpus needs labeled traces")]
    MissingLabel(Sha256Id),
    #[error("malformed vocabulary file: {0}")]
    BadVocabFile(String),
    #[error("malformed feature matrix cache: {0}")]
    BadCacheFile(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The four model variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unigram,
    Bigram,
    Trigram,
    Combined,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Unigram,
        Variant::Bigram,
        Variant::Trigram,
        Variant::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Unigram => "unigram",
            Variant::Bigram => "bigram",
            Variant::Trigram => "trigram",
            Variant::Combined => "combined",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "unigram" => Some(Variant::Unigram),
            "bigram" => Some(Variant::Bigram),
            "trigram" => Some(Variant::Trigram),
            "combined" => Some(Variant::Combined),
            _ => None,
        }
    }

    /// The n-gram order for single-order variants.
    pub fn order(self) -> Option<u8> {
        match self {
            Variant::Unigram => Some(1),
            Variant::Bigram => Some(2),
            Variant::Trigram => Some(3),
            Variant::Combined => None,
        }
    }

    pub fn from_order(n: u8) -> Option<Self> {
        match n {
            1 => Some(Variant::Unigram),
            2 => Some(Variant::Bigram),
            3 => Some(Variant::Trigram),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Unigram => 0,
            Variant::Bigram => 1,
            Variant::Trigram => 2,
            Variant::Combined => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Unigram),
            1 => Some(Variant::Bigram),
            2 => Some(Variant::Trigram),
            3 => Some(Variant::Combined),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of leading API calls considered when featurizing; at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct LengthThreshold(usize);

impl LengthThreshold {
    pub fn new(value: usize) -> Option<Self> {
        (value >= 1).then_some(LengthThreshold(value))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl<'de> Deserialize<'de> for LengthThreshold {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = usize::deserialize(deserializer)?;
        LengthThreshold::new(value)
            .ok_or_else(|| serde::de::Error::custom("length threshold must be at least 1"))
    }
}

impl std::fmt::Display for LengthThreshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// First `min(ℓ, |trace|)` calls of a trace; shorter traces come back whole.
pub fn truncate_trace(trace: &ApiTrace, threshold: LengthThreshold) -> &[ApiCallName] {
    let cut = threshold.get().min(trace.calls.len());
    &trace.calls[..cut]
}

/// One sample's count vector for a single variant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVector {
    pub variant: Variant,
    pub counts: Vec<u32>,
}

impl FeatureVector {
    pub fn dimension(&self) -> usize {
        self.counts.len()
    }
}

/// Count every in-vocabulary window of size `n` over `calls` into
/// `counts[offset..]`. Windows of out-of-vocabulary n-grams contribute
/// nothing.
pub(crate) fn count_ngrams_into(
    calls: &[ApiCallName],
    vocab: &NGramVocabulary,
    counts: &mut [u32],
    offset: usize,
) {
    let n = vocab.order() as usize;
    if calls.len() < n {
        return;
    }
    for window in calls.windows(n) {
        if let Some(index) = vocab.index_of(window) {
            counts[offset + index as usize] += 1;
        }
    }
}

/// Count a truncated trace against one n-gram vocabulary.
pub fn featurize_ngram(
    trace: &ApiTrace,
    threshold: LengthThreshold,
    vocab: &NGramVocabulary,
) -> FeatureVector {
    let mut counts = vec![0u32; vocab.size()];
    count_ngrams_into(truncate_trace(trace, threshold), vocab, &mut counts, 0);
    FeatureVector {
        variant: Variant::from_order(vocab.order()).expect("vocabulary order is 1..=3"),
        counts,
    }
}

/// Concatenated `[unigram | bigram | trigram]` counts, in that order.
pub fn featurize_combined(
    trace: &ApiTrace,
    threshold: LengthThreshold,
    vocabs: &VocabSet,
) -> FeatureVector {
    let mut counts = vec![0u32; vocabs.combined_dimension()];
    let calls = truncate_trace(trace, threshold);
    let mut offset = 0;
    for vocab in [&vocabs.uni, &vocabs.bi, &vocabs.tri] {
        count_ngrams_into(calls, vocab, &mut counts, offset);
        offset += vocab.size();
    }
    FeatureVector {
        variant: Variant::Combined,
        counts,
    }
}
