//! Loading a labeled corpus from a trace directory plus manifest.
//!
//! Trace files parse in parallel (each parse is independent); the
//! resulting corpus keeps manifest order so every downstream step sees
//! a stable sample ordering.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{apply_single_label_filter, load_manifest, LabelPolicy};
use super::trace_json::{parse_trace_file_with, TraceLayout};
use super::{ApiTrace, CorpusError, SampleLabel, Sha256Id};

/// Loader behavior knobs.
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub layout: TraceLayout,
    pub label_policy: LabelPolicy,
    /// Manifest entries whose trace file is missing: hard error when
    /// strict, skip with a warning count otherwise.
    pub strict_missing: bool,
}

/// An in-memory labeled corpus, in manifest order.
#[derive(Clone, Debug)]
pub struct Corpus {
    traces: Vec<ApiTrace>,
    index: HashMap<Sha256Id, usize>,
    /// Manifest entries dropped by single-label filtering.
    pub dropped_ambiguous: usize,
    /// Manifest entries skipped because their trace file was missing.
    pub skipped_missing: usize,
}

impl Corpus {
    /// Build a corpus from labeled traces. Every trace must carry a label.
    pub fn from_traces(traces: Vec<ApiTrace>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(traces.len());
        for (position, trace) in traces.iter().enumerate() {
            if trace.label.is_none() {
                return Err(CorpusError::UnknownSample(trace.sample_id));
            }
            if index.insert(trace.sample_id, position).is_some() {
                return Err(CorpusError::DuplicateSampleId(trace.sample_id));
            }
        }
        Ok(Corpus {
            traces,
            index,
            dropped_ambiguous: 0,
            skipped_missing: 0,
        })
    }

    pub fn traces(&self) -> &[ApiTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn get(&self, id: Sha256Id) -> Option<&ApiTrace> {
        self.index.get(&id).map(|&i| &self.traces[i])
    }

    /// Labeled ids in corpus order, the input to splitting.
    pub fn labeled_ids(&self) -> Vec<(Sha256Id, SampleLabel)> {
        self.traces
            .iter()
            .map(|t| (t.sample_id, t.label.expect("corpus traces are labeled")))
            .collect()
    }

    /// Resolve a list of split ids to traces, in the ids' order.
    pub fn select(&self, ids: &[Sha256Id]) -> Result<Vec<&ApiTrace>, CorpusError> {
        ids.iter()
            .map(|id| self.get(*id).ok_or(CorpusError::UnknownSample(*id)))
            .collect()
    }
}

/// Load traces named `<sha256>.json` under `trace_dir`, labeled via the
/// manifest at `manifest_path`.
pub fn load_corpus(
    trace_dir: &Path,
    manifest_path: &Path,
    options: &LoadOptions,
) -> Result<Corpus, CorpusError> {
    let manifest = load_manifest(manifest_path)?;
    let filtered = apply_single_label_filter(&manifest, options.label_policy)?;

    let mut present: Vec<(Sha256Id, SampleLabel, PathBuf)> =
        Vec::with_capacity(filtered.labeled.len());
    for (id, label) in &filtered.labeled {
        let path = trace_dir.join(format!("{id}.json"));
        if path.is_file() {
            present.push((*id, *label, path));
        } else if options.strict_missing {
            return Err(CorpusError::MissingTrace(*id));
        }
    }
    let skipped_missing = filtered.labeled.len() - present.len();
    if skipped_missing > 0 {
        log::warn!("skipped {skipped_missing} manifest entries with no trace file on disk");
    }

    let traces: Result<Vec<ApiTrace>, CorpusError> = present
        .par_iter()
        .map(|(id, label, path)| {
            let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
            let trace = parse_trace_file_with(&bytes, *id, &options.layout)?;
            Ok(trace.with_label(*label))
        })
        .collect();

    let mut corpus = Corpus::from_traces(traces?)?;
    corpus.dropped_ambiguous = filtered.dropped;
    corpus.skipped_missing = skipped_missing;
    Ok(corpus)
}
