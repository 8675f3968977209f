//! Trace corpus ingestion: per-sample API call traces, label manifests,
//! single-label filtering, and stratified train/test splitting.
//!
//! On disk a corpus is a directory of `<sha256>.json` trace files plus
//! one manifest CSV mapping each sample id to its raw label list. This
//! module parses both, drops samples whose labels are ambiguous, and
//! produces deterministic, stratified splits.

mod loader;
mod manifest;
mod split;
mod trace_json;

pub use loader::{load_corpus, Corpus, LoadOptions};
pub use manifest::{
    apply_single_label_filter, load_manifest, manifest_to_csv, parse_manifest, FilterOutcome,
    LabelPolicy,
};
pub use split::{corpus_stats, stratified_split, CorpusStats, DatasetSplit};
pub use trace_json::{parse_trace_file, write_trace_file, TraceLayout};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors raised while ingesting, filtering, or splitting a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON in trace {sample_id}: {detail}")]
    MalformedJson { sample_id: String, detail: String },
    #[error("trace {sample_id} does not match the expected schema: {detail}")]
    SchemaMismatch { sample_id: String, detail: String },
    #[error("trace {sample_id} embeds id {embedded}, which differs from its file name")]
    IdMismatch { sample_id: String, embedded: String },
    #[error("invalid sample id {0:?}: expected 64 lowercase hex characters")]
    InvalidSampleId(String),
    #[error("invalid API call name {0:?}: must be non-empty with no whitespace or path separators")]
    InvalidCallName(String),
    #[error("malformed manifest {path}: {detail}")]
    MalformedManifest { path: String, detail: String },
    #[error("duplicate sample id {0} in manifest")]
    DuplicateSampleId(Sha256Id),
    #[error("unknown label token {token:?} for sample {sample_id}")]
    UnknownLabelToken { sample_id: Sha256Id, token: String },
    #[error("class {0:?} has no samples")]
    EmptyClass(SampleLabel),
    #[error("split would leave the {0} set empty")]
    DegenerateSplit(&'static str),
    #[error("trace file for {0} is missing from the corpus directory")]
    MissingTrace(Sha256Id),
    #[error("sample {0} appears in the split but not in the manifest")]
    UnknownSample(Sha256Id),
    #[error("malformed split artifact: {0}")]
    MalformedSplit(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// A SHA-256 sample identifier: 64 lowercase hex characters.
///
/// Stored as the decoded 32 bytes; displayed and serialized as hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sha256Id([u8; 32]);

impl Sha256Id {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        if text.len() != 64 || !text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(CorpusError::InvalidSampleId(text.to_string()));
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(text, &mut bytes)
            .map_err(|_| CorpusError::InvalidSampleId(text.to_string()))?;
        Ok(Sha256Id(bytes))
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Sha256Id(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Sha256Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Sha256Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sha256Id({})", self.to_hex())
    }
}

impl FromStr for Sha256Id {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sha256Id::parse(s)
    }
}

impl Serialize for Sha256Id {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Sha256Id {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Sha256Id::parse(&text).map_err(D::Error::custom)
    }
}

/// One traced function name, e.g. `NtOpenFile`.
///
/// Non-empty, with no whitespace and no path separators.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ApiCallName(Box<str>);

impl ApiCallName {
    pub fn new(name: &str) -> Result<Self, CorpusError> {
        if name.is_empty()
            || name.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\')
        {
            return Err(CorpusError::InvalidCallName(name.to_string()));
        }
        Ok(ApiCallName(name.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ApiCallName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ApiCallName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ApiCallName({})", &self.0)
    }
}

impl Serialize for ApiCallName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ApiCallName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        ApiCallName::new(&text).map_err(D::Error::custom)
    }
}

/// Ground-truth class of a sample.
///
/// Benign is the positive class everywhere: it encodes to 1 and malware
/// to 0 in metric computations, matrix caches, and model files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleLabel {
    Malware,
    Benign,
}

impl SampleLabel {
    /// Both classes, in encoding order (malware = 0, benign = 1).
    pub const ALL: [SampleLabel; 2] = [SampleLabel::Malware, SampleLabel::Benign];

    pub fn as_index(self) -> usize {
        match self {
            SampleLabel::Malware => 0,
            SampleLabel::Benign => 1,
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        match index {
            0 => Some(SampleLabel::Malware),
            1 => Some(SampleLabel::Benign),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleLabel::Malware => "malware",
            SampleLabel::Benign => "benign",
        }
    }
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample's ordered API call sequence.
///
/// `calls` preserves file order exactly; it may be empty. The label is
/// absent until the trace is joined with a manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiTrace {
    pub sample_id: Sha256Id,
    pub calls: Vec<ApiCallName>,
    pub label: Option<SampleLabel>,
}

impl ApiTrace {
    pub fn new(sample_id: Sha256Id, calls: Vec<ApiCallName>) -> Self {
        ApiTrace {
            sample_id,
            calls,
            label: None,
        }
    }

    pub fn with_label(mut self, label: SampleLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}

/// One manifest row: a sample id and its raw (possibly conflicting)
/// label tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: Sha256Id,
    pub raw_labels: Vec<String>,
}

/// The parsed label manifest for a corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub source_path: String,
}
