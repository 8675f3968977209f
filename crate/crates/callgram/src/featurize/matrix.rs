//! Per-corpus feature matrices and the on-disk cache format.
//!
//! Rows are stored sparsely (trigram vectors are almost entirely zeros
//! at small thresholds) and densified on demand for training. The cache
//! file is a little-endian binary layout:
//!
//! ```text
//! magic    "CGFM"
//! version  u16 (currently 1)
//! variant  u8 (0 unigram, 1 bigram, 2 trigram, 3 combined)
//! length   u64 truncation threshold
//! dim      u32 feature dimension
//! rows     u64 row count
//! nfp      u8, then per fingerprint: u16 length + utf8 hex
//! ids      rows * 32 bytes (raw sha256)
//! labels   rows * 1 byte (0 malware, 1 benign)
//! counts   rows * dim * u32, row-major
//! ```
//!
//! Decoding validates every size against the buffer before allocating,
//! so arbitrary input cannot panic or over-allocate.

use rayon::prelude::*;

use crate::bytesio::{put_u16, put_u32, put_u64, ByteReader};
use crate::corpus::{ApiCallName, ApiTrace, SampleLabel, Sha256Id};

use super::vocab::{NGramVocabulary, VocabSet};
use super::{FeaturizeError, LengthThreshold, Variant};

const MAGIC: &[u8; 4] = b"CGFM";
const VERSION: u16 = 1;

/// The vocabularies backing one featurization run.
#[derive(Clone, Copy, Debug)]
pub enum FeatureVocabs<'a> {
    Single(&'a NGramVocabulary),
    Combined(&'a VocabSet),
}

impl<'a> FeatureVocabs<'a> {
    pub fn for_variant(variant: Variant, vocabs: &'a VocabSet) -> Self {
        match variant {
            Variant::Unigram => FeatureVocabs::Single(&vocabs.uni),
            Variant::Bigram => FeatureVocabs::Single(&vocabs.bi),
            Variant::Trigram => FeatureVocabs::Single(&vocabs.tri),
            Variant::Combined => FeatureVocabs::Combined(vocabs),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            FeatureVocabs::Single(vocab) => {
                Variant::from_order(vocab.order()).expect("vocabulary order is 1..=3")
            }
            FeatureVocabs::Combined(_) => Variant::Combined,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            FeatureVocabs::Single(vocab) => vocab.size(),
            FeatureVocabs::Combined(set) => set.combined_dimension(),
        }
    }

    fn fingerprints(&self) -> Vec<String> {
        match self {
            FeatureVocabs::Single(vocab) => vec![vocab.fingerprint().to_string()],
            FeatureVocabs::Combined(set) => set.fingerprints(Variant::Combined),
        }
    }

    /// (vocabulary, column offset) pairs in concatenation order.
    fn parts(&self) -> Vec<(&'a NGramVocabulary, usize)> {
        match self {
            FeatureVocabs::Single(vocab) => vec![(*vocab, 0)],
            FeatureVocabs::Combined(set) => vec![
                (&set.uni, 0),
                (&set.bi, set.uni.size()),
                (&set.tri, set.uni.size() + set.bi.size()),
            ],
        }
    }
}

/// One sparse row: `(column, count)` entries sorted by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct SparseRow {
    pub entries: Vec<(u32, u32)>,
}

impl SparseRow {
    fn from_dense(dense: &[u32]) -> Self {
        SparseRow {
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, &count)| count != 0)
                .map(|(column, &count)| (column as u32, count))
                .collect(),
        }
    }

    fn write_dense_into(&self, out: &mut [u32]) {
        out.fill(0);
        for &(column, count) in &self.entries {
            out[column as usize] = count;
        }
    }
}

/// Row-per-sample count vectors for one variant and threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    variant: Variant,
    threshold: LengthThreshold,
    dim: usize,
    vocab_fingerprints: Vec<String>,
    sample_ids: Vec<Sha256Id>,
    labels: Vec<SampleLabel>,
    rows: Vec<SparseRow>,
}

impl FeatureMatrix {
    /// Assemble a matrix from dense rows; used by tests and decoders.
    pub fn from_dense_rows(
        variant: Variant,
        threshold: LengthThreshold,
        dim: usize,
        vocab_fingerprints: Vec<String>,
        sample_ids: Vec<Sha256Id>,
        labels: Vec<SampleLabel>,
        dense_rows: Vec<Vec<u32>>,
    ) -> Result<Self, FeaturizeError> {
        if sample_ids.len() != labels.len() || labels.len() != dense_rows.len() {
            return Err(FeaturizeError::DimensionMismatch(format!(
                "ids/labels/rows disagree: {} / {} / {}",
                sample_ids.len(),
                labels.len(),
                dense_rows.len()
            )));
        }
        for (i, row) in dense_rows.iter().enumerate() {
            if row.len() != dim {
                return Err(FeaturizeError::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
        }
        Ok(FeatureMatrix {
            variant,
            threshold,
            dim,
            vocab_fingerprints,
            sample_ids,
            labels,
            rows: dense_rows.iter().map(|r| SparseRow::from_dense(r)).collect(),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn threshold(&self) -> LengthThreshold {
        self.threshold
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn labels(&self) -> &[SampleLabel] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[Sha256Id] {
        &self.sample_ids
    }

    pub fn vocab_fingerprints(&self) -> &[String] {
        &self.vocab_fingerprints
    }

    /// Materialize one row as a dense count vector.
    pub fn row_dense(&self, row: usize) -> Vec<u32> {
        let mut dense = vec![0u32; self.dim];
        self.rows[row].write_dense_into(&mut dense);
        dense
    }

    /// Materialize the whole matrix row-major; training densifies here.
    pub fn to_dense(&self) -> Vec<u32> {
        let mut dense = vec![0u32; self.rows.len() * self.dim];
        for (i, row) in self.rows.iter().enumerate() {
            row.write_dense_into(&mut dense[i * self.dim..(i + 1) * self.dim]);
        }
        dense
    }

    /// Encode to the cache layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, VERSION);
        out.push(self.variant.code());
        put_u64(&mut out, self.threshold.get() as u64);
        put_u32(&mut out, self.dim as u32);
        put_u64(&mut out, self.rows.len() as u64);
        out.push(self.vocab_fingerprints.len() as u8);
        for fingerprint in &self.vocab_fingerprints {
            put_u16(&mut out, fingerprint.len() as u16);
            out.extend_from_slice(fingerprint.as_bytes());
        }
        for id in &self.sample_ids {
            out.extend_from_slice(id.as_bytes());
        }
        for label in &self.labels {
            out.push(label.as_index() as u8);
        }
        let mut dense = vec![0u32; self.dim];
        for row in &self.rows {
            row.write_dense_into(&mut dense);
            for &count in &dense {
                put_u32(&mut out, count);
            }
        }
        out
    }

    /// Decode a cache file.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeaturizeError> {
        let bad = |detail: &str| FeaturizeError::BadCacheFile(detail.to_string());
        let mut reader = ByteReader::new(bytes);
        if reader.take(4).map_err(|_| bad("truncated magic"))? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = reader.u16().map_err(|_| bad("truncated version"))?;
        if version != VERSION {
            return Err(FeaturizeError::BadCacheFile(format!(
                "unsupported cache version {version}"
            )));
        }
        let variant = Variant::from_code(reader.u8().map_err(|_| bad("truncated variant"))?)
            .ok_or_else(|| bad("unknown variant code"))?;
        let threshold = reader.u64().map_err(|_| bad("truncated threshold"))?;
        let threshold = usize::try_from(threshold)
            .ok()
            .and_then(LengthThreshold::new)
            .ok_or_else(|| bad("threshold must be a positive machine-sized integer"))?;
        let dim = reader.u32().map_err(|_| bad("truncated dimension"))? as usize;
        let rows = reader.u64().map_err(|_| bad("truncated row count"))?;
        let rows = usize::try_from(rows).map_err(|_| bad("row count overflows usize"))?;

        let n_fingerprints = reader.u8().map_err(|_| bad("truncated fingerprint count"))?;
        if !(1..=3).contains(&n_fingerprints) {
            return Err(bad("fingerprint count must be 1..=3"));
        }
        let mut vocab_fingerprints = Vec::with_capacity(n_fingerprints as usize);
        for _ in 0..n_fingerprints {
            let len = reader.u16().map_err(|_| bad("truncated fingerprint length"))? as usize;
            let raw = reader.take(len).map_err(|_| bad("truncated fingerprint"))?;
            let text =
                std::str::from_utf8(raw).map_err(|_| bad("fingerprint is not utf-8"))?;
            vocab_fingerprints.push(text.to_string());
        }

        // Validate the advertised geometry against what is actually here
        // before allocating anything row-sized.
        let per_row = 32u64 + 1 + 4 * dim as u64;
        let expected = (rows as u64)
            .checked_mul(per_row)
            .ok_or_else(|| bad("size overflow"))?;
        if reader.remaining() as u64 != expected {
            return Err(FeaturizeError::BadCacheFile(format!(
                "payload is {} bytes, geometry implies {expected}",
                reader.remaining()
            )));
        }

        let mut sample_ids = Vec::with_capacity(rows);
        for _ in 0..rows {
            let raw: [u8; 32] = reader
                .take(32)
                .map_err(|_| bad("truncated sample id"))?
                .try_into()
                .unwrap();
            sample_ids.push(Sha256Id::from_bytes(raw));
        }
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            let code = reader.u8().map_err(|_| bad("truncated label"))?;
            labels.push(SampleLabel::from_index(code).ok_or_else(|| bad("bad label byte"))?);
        }
        let mut matrix_rows = Vec::with_capacity(rows);
        let mut dense = vec![0u32; dim];
        for _ in 0..rows {
            for slot in dense.iter_mut() {
                *slot = reader.u32().map_err(|_| bad("truncated counts"))?;
            }
            matrix_rows.push(SparseRow::from_dense(&dense));
        }
        debug_assert!(reader.is_exhausted());

        Ok(FeatureMatrix {
            variant,
            threshold,
            dim,
            vocab_fingerprints,
            sample_ids,
            labels,
            rows: matrix_rows,
        })
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), FeaturizeError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| FeaturizeError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, FeaturizeError> {
        let bytes = std::fs::read(path).map_err(|e| FeaturizeError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        FeatureMatrix::from_bytes(&bytes)
    }

    /// Debug-oriented CSV export equivalent to the binary cache.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str("sample_id,label");
        for column in 0..self.dim {
            out.push_str(&format!(",f{column}"));
        }
        out.push('\n');
        let mut dense = vec![0u32; self.dim];
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&self.sample_ids[i].to_hex());
            out.push(',');
            out.push_str(self.labels[i].as_str());
            row.write_dense_into(&mut dense);
            for &count in &dense {
                out.push(',');
                out.push_str(&count.to_string());
            }
            out.push('\n');
        }
        out.into_bytes()
    }
}

fn count_window_tracked(
    calls: &[ApiCallName],
    vocab: &NGramVocabulary,
    offset: usize,
    scratch: &mut [u32],
    touched: &mut Vec<u32>,
) {
    let n = vocab.order() as usize;
    if calls.len() < n {
        return;
    }
    for window in calls.windows(n) {
        if let Some(index) = vocab.index_of(window) {
            let column = offset + index as usize;
            if scratch[column] == 0 {
                touched.push(column as u32);
            }
            scratch[column] += 1;
        }
    }
}

/// Featurize traces into a matrix, one row per trace in input order.
///
/// Rows are computed in parallel; ordering and content are identical
/// for any worker count. Unlabeled traces fail with their sample id.
pub fn featurize_corpus(
    traces: &[&ApiTrace],
    threshold: LengthThreshold,
    vocabs: FeatureVocabs<'_>,
) -> Result<FeatureMatrix, FeaturizeError> {
    let dim = vocabs.dimension();
    let parts = vocabs.parts();

    let rows: Result<Vec<(Sha256Id, SampleLabel, SparseRow)>, FeaturizeError> = traces
        .par_iter()
        .map_init(
            || (vec![0u32; dim], Vec::<u32>::new()),
            |(scratch, touched), trace| {
                let label = trace
                    .label
                    .ok_or(FeaturizeError::MissingLabel(trace.sample_id))?;
                let calls = super::truncate_trace(trace, threshold);
                for (vocab, offset) in &parts {
                    count_window_tracked(calls, vocab, *offset, scratch, touched);
                }
                touched.sort_unstable();
                let entries = touched
                    .iter()
                    .map(|&column| (column, scratch[column as usize]))
                    .collect();
                for &column in touched.iter() {
                    scratch[column as usize] = 0;
                }
                touched.clear();
                Ok((trace.sample_id, label, SparseRow { entries }))
            },
        )
        .collect();

    let mut sample_ids = Vec::with_capacity(traces.len());
    let mut labels = Vec::with_capacity(traces.len());
    let mut matrix_rows = Vec::with_capacity(traces.len());
    for (id, label, row) in rows? {
        sample_ids.push(id);
        labels.push(label);
        matrix_rows.push(row);
    }

    Ok(FeatureMatrix {
        variant: vocabs.variant(),
        threshold,
        dim,
        vocab_fingerprints: vocabs.fingerprints(),
        sample_ids,
        labels,
        rows: matrix_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::trace_of;
    use super::super::{featurize_combined, featurize_ngram};
    use super::*;

    fn labeled_traces() -> Vec<ApiTrace> {
        let specs: [(&[&str], SampleLabel); 3] = [
            (&["A", "B", "A", "C"], SampleLabel::Malware),
            (&["B", "B", "C"], SampleLabel::Benign),
            (&["C", "A"], SampleLabel::Malware),
        ];
        specs
            .iter()
            .enumerate()
            .map(|(i, (calls, label))| {
                let mut trace = trace_of(calls);
                let mut raw = [0u8; 32];
                raw[0] = i as u8 + 1;
                trace.sample_id = Sha256Id::from_bytes(raw);
                trace.with_label(*label)
            })
            .collect()
    }

    #[test]
    fn rows_follow_input_order() {
        let traces = labeled_traces();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let threshold = LengthThreshold::new(10).unwrap();
        let matrix =
            featurize_corpus(&refs, threshold, FeatureVocabs::Combined(&vocabs)).unwrap();

        assert_eq!(matrix.n_rows(), 3);
        assert_eq!(matrix.dimension(), vocabs.combined_dimension());
        for (i, trace) in traces.iter().enumerate() {
            let expected = featurize_combined(trace, threshold, &vocabs);
            assert_eq!(matrix.row_dense(i), expected.counts, "row {i}");
            assert_eq!(matrix.labels()[i], trace.label.unwrap());
            assert_eq!(matrix.sample_ids()[i], trace.sample_id);
        }
    }

    #[test]
    fn single_variant_matches_featurize_ngram() {
        let traces = labeled_traces();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let threshold = LengthThreshold::new(3).unwrap();
        let matrix =
            featurize_corpus(&refs, threshold, FeatureVocabs::Single(&vocabs.bi)).unwrap();
        assert_eq!(matrix.variant(), Variant::Bigram);
        for (i, trace) in traces.iter().enumerate() {
            assert_eq!(
                matrix.row_dense(i),
                featurize_ngram(trace, threshold, &vocabs.bi).counts
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_the_matrix() {
        let traces = labeled_traces();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let threshold = LengthThreshold::new(4).unwrap();

        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                featurize_corpus(&refs, threshold, FeatureVocabs::Combined(&vocabs)).unwrap()
            })
        };
        let single = run(1);
        let many = run(8);
        assert_eq!(single, many);
        assert_eq!(single.to_bytes(), many.to_bytes());
    }

    #[test]
    fn unlabeled_trace_fails_with_its_id() {
        let mut traces = labeled_traces();
        traces[1].label = None;
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let err = featurize_corpus(
            &refs,
            LengthThreshold::new(4).unwrap(),
            FeatureVocabs::Combined(&vocabs),
        )
        .unwrap_err();
        match err {
            FeaturizeError::MissingLabel(id) => assert_eq!(id, traces[1].sample_id),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let traces = labeled_traces();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let matrix = featurize_corpus(
            &refs,
            LengthThreshold::new(4).unwrap(),
            FeatureVocabs::Combined(&vocabs),
        )
        .unwrap();
        let bytes = matrix.to_bytes();
        let parsed = FeatureMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(parsed, matrix);
        assert_eq!(parsed.to_bytes(), bytes);
    }

    #[test]
    fn cache_decoder_rejects_damage() {
        let traces = labeled_traces();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let matrix = featurize_corpus(
            &refs,
            LengthThreshold::new(4).unwrap(),
            FeatureVocabs::Single(&vocabs.uni),
        )
        .unwrap();
        let bytes = matrix.to_bytes();

        assert!(FeatureMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(FeatureMatrix::from_bytes(&bytes[..10]).is_err());
        assert!(FeatureMatrix::from_bytes(b"").is_err());

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(FeatureMatrix::from_bytes(&wrong_version).is_err());

        let mut wrong_magic = bytes;
        wrong_magic[0] = b'X';
        assert!(FeatureMatrix::from_bytes(&wrong_magic).is_err());
    }

    #[test]
    fn csv_export_lists_every_row() {
        let traces = labeled_traces();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        let vocabs = VocabSet::build(&refs, None).unwrap();
        let matrix = featurize_corpus(
            &refs,
            LengthThreshold::new(4).unwrap(),
            FeatureVocabs::Single(&vocabs.uni),
        )
        .unwrap();
        let text = String::from_utf8(matrix.to_csv_bytes()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + matrix.n_rows());
        assert!(lines[0].starts_with("sample_id,label,f0"));
        assert!(lines[1].contains(",malware,"));
    }
}
