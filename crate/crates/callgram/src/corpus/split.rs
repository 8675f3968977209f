//! Stratified train/test splitting and corpus statistics.
//!
//! Each class is shuffled with its own ChaCha20 stream derived from the
//! split seed, then cut at `floor(train_fraction * class_size + 0.5)`;
//! the remainder goes to the test side. The same inputs therefore yield
//! byte-identical splits on every platform and thread count.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded_rng, RNG_ALGORITHM};

use super::{CorpusError, SampleLabel, Sha256Id};

/// A reproducible train/test partition of labeled sample ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train_fraction: f64,
    pub rng_algorithm: String,
    pub train_ids: Vec<Sha256Id>,
    pub test_ids: Vec<Sha256Id>,
}

impl DatasetSplit {
    /// Serialize to the split artifact JSON layout.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("split serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    /// Parse a split artifact, validating id formats and disjointness.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let split: DatasetSplit = serde_json::from_slice(bytes)
            .map_err(|e| CorpusError::MalformedSplit(e.to_string()))?;
        if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
            return Err(CorpusError::MalformedSplit(format!(
                "train_fraction {} outside (0, 1)",
                split.train_fraction
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(
            split.train_ids.len() + split.test_ids.len(),
        );
        for id in split.train_ids.iter().chain(&split.test_ids) {
            if !seen.insert(*id) {
                return Err(CorpusError::MalformedSplit(format!(
                    "sample {id} appears twice in the split"
                )));
            }
        }
        Ok(split)
    }
}

/// Per-class train size under the round-half-up rule.
fn train_count(fraction: f64, class_size: usize) -> usize {
    (fraction * class_size as f64 + 0.5).floor() as usize
}

/// Produce a stratified split of labeled sample ids.
///
/// Per-class shuffles use streams derived from `seed`, so the result is
/// deterministic for fixed `(samples, train_fraction, seed)` and the
/// per-class proportions in both halves stay within one sample's worth
/// of the corpus proportion.
pub fn stratified_split(
    samples: &[(Sha256Id, SampleLabel)],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must lie in (0, 1), got {train_fraction}"
    );

    let mut by_class: [Vec<Sha256Id>; 2] = [Vec::new(), Vec::new()];
    for (id, label) in samples {
        by_class[label.as_index()].push(*id);
    }
    for label in SampleLabel::ALL {
        if by_class[label.as_index()].is_empty() {
            return Err(CorpusError::EmptyClass(label));
        }
    }

    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for label in SampleLabel::ALL {
        let ids = &mut by_class[label.as_index()];
        let mut rng = seeded_rng(derive_seed(seed, label.as_index() as u64));
        ids.shuffle(&mut rng);
        let cut = train_count(train_fraction, ids.len());
        train_ids.extend_from_slice(&ids[..cut]);
        test_ids.extend_from_slice(&ids[cut..]);
    }

    if train_ids.is_empty() {
        return Err(CorpusError::DegenerateSplit("train"));
    }
    if test_ids.is_empty() {
        return Err(CorpusError::DegenerateSplit("test"));
    }

    Ok(DatasetSplit {
        seed,
        train_fraction,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        train_ids,
        test_ids,
    })
}

/// Per-class counts and fractions for a labeled sample set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub malware: usize,
    pub benign: usize,
    pub malware_fraction: f64,
    pub benign_fraction: f64,
}

/// Exact class counts; fractions sum to 1 for non-empty input.
pub fn corpus_stats(samples: &[(Sha256Id, SampleLabel)]) -> CorpusStats {
    let mut counts = [0usize; 2];
    for (_, label) in samples {
        counts[label.as_index()] += 1;
    }
    let total = samples.len();
    let fraction = |count: usize| {
        if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        }
    };
    CorpusStats {
        total,
        malware: counts[SampleLabel::Malware.as_index()],
        benign: counts[SampleLabel::Benign.as_index()],
        malware_fraction: fraction(counts[SampleLabel::Malware.as_index()]),
        benign_fraction: fraction(counts[SampleLabel::Benign.as_index()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(count: usize, offset: u64) -> Vec<Sha256Id> {
        (0..count as u64)
            .map(|i| {
                let mut bytes = [0u8; 32];
                bytes[..8].copy_from_slice(&(i + offset).to_be_bytes());
                Sha256Id::from_bytes(bytes)
            })
            .collect()
    }

    fn labeled(malware: usize, benign: usize) -> Vec<(Sha256Id, SampleLabel)> {
        let mut samples: Vec<(Sha256Id, SampleLabel)> = ids(malware, 0)
            .into_iter()
            .map(|id| (id, SampleLabel::Malware))
            .collect();
        samples.extend(
            ids(benign, 1 << 40)
                .into_iter()
                .map(|id| (id, SampleLabel::Benign)),
        );
        samples
    }

    fn class_count(ids: &[Sha256Id], samples: &[(Sha256Id, SampleLabel)], label: SampleLabel) -> usize {
        let set: std::collections::HashSet<_> = samples
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(id, _)| *id)
            .collect();
        ids.iter().filter(|id| set.contains(id)).count()
    }

    #[test]
    fn rounding_rule_matches_enumerated_case() {
        // 97 malware / 3 benign at 0.75: floor(72.75 + 0.5) = 73 and
        // floor(2.25 + 0.5) = 2, so train = 75 and test = 25.
        let samples = labeled(97, 3);
        let split = stratified_split(&samples, 0.75, 42).unwrap();
        assert_eq!(split.train_ids.len(), 75);
        assert_eq!(split.test_ids.len(), 25);
        assert_eq!(class_count(&split.train_ids, &samples, SampleLabel::Malware), 73);
        assert_eq!(class_count(&split.train_ids, &samples, SampleLabel::Benign), 2);
    }

    #[test]
    fn split_is_deterministic() {
        let samples = labeled(97, 3);
        let a = stratified_split(&samples, 0.75, 42).unwrap();
        let b = stratified_split(&samples, 0.75, 42).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&samples, 0.75, 43).unwrap();
        assert_ne!(a.train_ids, c.train_ids);
    }

    #[test]
    fn corpus_scale_counts_match_published_split() {
        // 334,044 filtered samples at the published 96.9% / 3.1% class
        // balance: 323,689 malware + 10,355 benign. The per-class
        // round-half-up rule lands exactly on 250,533 / 83,511.
        let malware = 323_689usize;
        let benign = 10_355usize;
        assert_eq!(malware + benign, 334_044);
        let split = stratified_split(&labeled(malware, benign), 0.75, 42).unwrap();
        assert_eq!(split.train_ids.len(), 250_533);
        assert_eq!(split.test_ids.len(), 83_511);
    }

    #[test]
    fn empty_class_is_an_error() {
        let samples = labeled(5, 0);
        assert!(matches!(
            stratified_split(&samples, 0.75, 1).unwrap_err(),
            CorpusError::EmptyClass(SampleLabel::Benign)
        ));
    }

    #[test]
    fn degenerate_split_is_an_error() {
        // One sample per class: both land in train, leaving test empty.
        let samples = labeled(1, 1);
        assert!(matches!(
            stratified_split(&samples, 0.75, 1).unwrap_err(),
            CorpusError::DegenerateSplit("test")
        ));
    }

    #[test]
    fn stats_count_exactly() {
        assert_eq!(
            corpus_stats(&[]),
            CorpusStats {
                total: 0,
                malware: 0,
                benign: 0,
                malware_fraction: 0.0,
                benign_fraction: 0.0
            }
        );
        let stats = corpus_stats(&labeled(97, 3));
        assert_eq!(stats.malware, 97);
        assert_eq!(stats.benign, 3);
        assert!((stats.malware_fraction - 0.97).abs() < 1e-12);
        assert!((stats.benign_fraction - 0.03).abs() < 1e-12);
    }

    #[test]
    fn published_corpus_fractions() {
        let stats = corpus_stats(&labeled(323_689, 10_355));
        assert!((stats.malware_fraction - 0.969).abs() < 5e-4);
        assert!((stats.benign_fraction - 0.031).abs() < 5e-4);
        assert!((stats.malware_fraction + stats.benign_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn artifact_round_trip_and_validation() {
        let samples = labeled(10, 4);
        let split = stratified_split(&samples, 0.75, 7).unwrap();
        let bytes = split.to_json_bytes();
        let parsed = DatasetSplit::from_json_bytes(&bytes).unwrap();
        assert_eq!(parsed, split);

        let mut overlapping = split.clone();
        overlapping.test_ids.push(split.train_ids[0]);
        let bytes = overlapping.to_json_bytes();
        assert!(matches!(
            DatasetSplit::from_json_bytes(&bytes).unwrap_err(),
            CorpusError::MalformedSplit(_)
        ));
    }
}
