//! Trace file parsing.
//!
//! The canonical trace layout is one JSON object per sample:
//!
//! ```json
//! {"sha256": "<64 hex chars>", "api_calls": ["NtOpenFile", "NtClose"]}
//! ```
//!
//! Archives in the wild disagree on where the call array lives, so
//! [`TraceLayout`] carries one configurable key path for it (dotted for
//! nesting, e.g. `behavior.calls`). Parsing never reorders or
//! deduplicates: the returned sequence is exactly the file's.

use serde_json::Value;

use super::{ApiCallName, ApiTrace, CorpusError, Sha256Id};

/// Where to find the call array and the embedded id inside a trace file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLayout {
    /// Key path to the call array, one key per nesting level.
    pub calls_path: Vec<String>,
    /// Top-level key holding the sample's own id, checked against the
    /// file name when present. `None` disables the check.
    pub id_key: Option<String>,
}

impl Default for TraceLayout {
    fn default() -> Self {
        TraceLayout {
            calls_path: vec!["api_calls".to_string()],
            id_key: Some("sha256".to_string()),
        }
    }
}

impl TraceLayout {
    /// Layout with the call array under a dotted key path, id check
    /// unchanged from the default.
    pub fn with_calls_path(path: &str) -> Self {
        TraceLayout {
            calls_path: path.split('.').map(str::to_string).collect(),
            ..TraceLayout::default()
        }
    }
}

/// Parse one trace file under the default layout.
///
/// The trace comes back unlabeled; labels are joined in from the
/// manifest by the corpus loader.
pub fn parse_trace_file(bytes: &[u8], expected_id: Sha256Id) -> Result<ApiTrace, CorpusError> {
    parse_trace_file_with(bytes, expected_id, &TraceLayout::default())
}

/// Parse one trace file under an explicit layout.
pub fn parse_trace_file_with(
    bytes: &[u8],
    expected_id: Sha256Id,
    layout: &TraceLayout,
) -> Result<ApiTrace, CorpusError> {
    let sample_id = expected_id.to_hex();
    let root: Value = serde_json::from_slice(bytes).map_err(|e| CorpusError::MalformedJson {
        sample_id: sample_id.clone(),
        detail: e.to_string(),
    })?;

    let object = root.as_object().ok_or_else(|| CorpusError::SchemaMismatch {
        sample_id: sample_id.clone(),
        detail: "root is not an object".to_string(),
    })?;

    if let Some(id_key) = &layout.id_key {
        if let Some(embedded) = object.get(id_key) {
            let embedded = embedded.as_str().ok_or_else(|| CorpusError::SchemaMismatch {
                sample_id: sample_id.clone(),
                detail: format!("{id_key} is not a string"),
            })?;
            if embedded != sample_id {
                return Err(CorpusError::IdMismatch {
                    sample_id,
                    embedded: embedded.to_string(),
                });
            }
        }
    }

    let mut node = &root;
    for key in &layout.calls_path {
        node = node
            .get(key)
            .ok_or_else(|| CorpusError::SchemaMismatch {
                sample_id: sample_id.clone(),
                detail: format!("missing key {:?} on the call array path", key),
            })?;
    }
    let array = node.as_array().ok_or_else(|| CorpusError::SchemaMismatch {
        sample_id: sample_id.clone(),
        detail: format!("{} is not an array", layout.calls_path.join(".")),
    })?;

    let mut calls = Vec::with_capacity(array.len());
    for (position, element) in array.iter().enumerate() {
        let name = element.as_str().ok_or_else(|| CorpusError::SchemaMismatch {
            sample_id: sample_id.clone(),
            detail: format!("call at position {position} is not a string"),
        })?;
        let call = ApiCallName::new(name).map_err(|_| CorpusError::SchemaMismatch {
            sample_id: sample_id.clone(),
            detail: format!("call at position {position} is not a valid API name: {name:?}"),
        })?;
        calls.push(call);
    }

    Ok(ApiTrace::new(expected_id, calls))
}

/// Serialize a trace to the canonical layout.
///
/// Deterministic: parsing the output reproduces the trace exactly.
pub fn write_trace_file(trace: &ApiTrace) -> Vec<u8> {
    let calls: Vec<&str> = trace.calls.iter().map(ApiCallName::as_str).collect();
    let value = serde_json::json!({
        "sha256": trace.sample_id.to_hex(),
        "api_calls": calls,
    });
    let mut bytes = serde_json::to_vec(&value).expect("trace serialization cannot fail");
    bytes.push(b'\n');
    bytes
}
