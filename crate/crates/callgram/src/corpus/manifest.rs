//! Manifest parsing and single-label filtering.
//!
//! The manifest is a CSV file with header `sample_id,labels`, where
//! `labels` is a pipe-separated list of raw label tokens. A sample is
//! usable only when its tokens, after deduplication, name exactly one
//! recognized class.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use super::{CorpusError, CorpusManifest, ManifestEntry, SampleLabel, Sha256Id};

/// How to treat label tokens outside {benign, malware}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelPolicy {
    /// Unknown tokens are an error.
    Strict,
    /// Unknown tokens are ignored; the entry survives only if the
    /// remaining recognized tokens are unambiguous.
    #[default]
    Lenient,
}

/// Result of single-label filtering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterOutcome {
    /// Samples with an unambiguous class, in manifest order.
    pub labeled: Vec<(Sha256Id, SampleLabel)>,
    /// Entries dropped for having zero or more than one distinct class.
    pub dropped: usize,
}

/// Parse a manifest from CSV bytes.
pub fn parse_manifest(bytes: &[u8], source_path: &str) -> Result<CorpusManifest, CorpusError> {
    let malformed = |detail: String| CorpusError::MalformedManifest {
        path: source_path.to_string(),
        detail,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);

    {
        let headers = reader.headers().map_err(|e| malformed(e.to_string()))?;
        let expected = ["sample_id", "labels"];
        if headers.len() != 2 || headers.iter().ne(expected) {
            return Err(malformed(format!(
                "expected header sample_id,labels, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let id_field = record.get(0).unwrap_or("");
        let sample_id = Sha256Id::parse(id_field)
            .map_err(|_| malformed(format!("row {}: invalid sample id {id_field:?}", row + 1)))?;
        if !seen.insert(sample_id) {
            return Err(CorpusError::DuplicateSampleId(sample_id));
        }
        let raw_labels: Vec<String> = record
            .get(1)
            .unwrap_or("")
            .split('|')
            .map(|token| token.trim().to_string())
            .filter(|token| !token.is_empty())
            .collect();
        if raw_labels.is_empty() {
            return Err(malformed(format!("row {}: empty label list", row + 1)));
        }
        entries.push(ManifestEntry {
            sample_id,
            raw_labels,
        });
    }

    Ok(CorpusManifest {
        entries,
        source_path: source_path.to_string(),
    })
}

/// Load and parse a manifest file.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CorpusError::io(path, e))?;
    parse_manifest(&bytes, &path.display().to_string())
}

/// Write a manifest in the canonical CSV layout (LF line endings).
pub fn manifest_to_csv(entries: &[(Sha256Id, SampleLabel)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"sample_id,labels\n");
    for (id, label) in entries {
        out.extend_from_slice(id.to_hex().as_bytes());
        out.push(b',');
        out.extend_from_slice(label.as_str().as_bytes());
        out.push(b'\n');
    }
    out
}

fn recognize(token: &str) -> Option<SampleLabel> {
    match token.to_ascii_lowercase().as_str() {
        "benign" => Some(SampleLabel::Benign),
        "malware" => Some(SampleLabel::Malware),
        _ => None,
    }
}

/// Keep exactly the entries whose deduplicated labels name one class.
///
/// Returns the surviving `(sample_id, label)` pairs in manifest order
/// plus the count of dropped entries.
pub fn apply_single_label_filter(
    manifest: &CorpusManifest,
    policy: LabelPolicy,
) -> Result<FilterOutcome, CorpusError> {
    let mut labeled = Vec::with_capacity(manifest.entries.len());
    let mut dropped = 0usize;

    for entry in &manifest.entries {
        let mut distinct: Option<SampleLabel> = None;
        let mut ambiguous = false;
        let mut recognized_any = false;
        for token in &entry.raw_labels {
            match recognize(token) {
                Some(label) => {
                    recognized_any = true;
                    match distinct {
                        None => distinct = Some(label),
                        Some(existing) if existing != label => ambiguous = true,
                        Some(_) => {}
                    }
                }
                None => {
                    if policy == LabelPolicy::Strict {
                        return Err(CorpusError::UnknownLabelToken {
                            sample_id: entry.sample_id,
                            token: token.clone(),
                        });
                    }
                }
            }
        }
        match (recognized_any, ambiguous, distinct) {
            (true, false, Some(label)) => labeled.push((entry.sample_id, label)),
            _ => dropped += 1,
        }
    }

    Ok(FilterOutcome { labeled, dropped })
}
