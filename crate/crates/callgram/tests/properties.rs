//! Property tests for the pipeline's structural invariants.

use proptest::prelude::*;

use callgram::corpus::{
    apply_single_label_filter, parse_trace_file, stratified_split, write_trace_file, ApiCallName,
    ApiTrace, CorpusManifest, LabelPolicy, ManifestEntry, SampleLabel, Sha256Id,
};
use callgram::eval::{roc_auc, roc_curve, trapezoid_area};
use callgram::featurize::{
    build_ngram_vocab, featurize_ngram, truncate_trace, LengthThreshold,
};

const ALPHABET: [&str; 8] = [
    "NtOpenFile",
    "NtClose",
    "NtReadFile",
    "NtWriteFile",
    "NtCreateKey",
    "NtQueryKey",
    "NtAllocateVirtualMemory",
    "NtFreeVirtualMemory",
];

fn name(index: usize) -> ApiCallName {
    ApiCallName::new(ALPHABET[index % ALPHABET.len()]).unwrap()
}

fn id_from(tag: u64) -> Sha256Id {
    let mut raw = [0u8; 32];
    raw[..8].copy_from_slice(&tag.to_be_bytes());
    Sha256Id::from_bytes(raw)
}

fn trace_from(indices: &[usize]) -> ApiTrace {
    ApiTrace::new(id_from(1), indices.iter().map(|&i| name(i)).collect())
}

fn calls_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..ALPHABET.len(), 0..120)
}

proptest! {
    #[test]
    fn trace_round_trip_preserves_everything(indices in calls_strategy()) {
        let trace = trace_from(&indices);
        let bytes = write_trace_file(&trace);
        let parsed = parse_trace_file(&bytes, trace.sample_id).unwrap();
        prop_assert_eq!(parsed.sample_id, trace.sample_id);
        prop_assert_eq!(parsed.calls, trace.calls);
    }

    #[test]
    fn single_label_filter_is_idempotent(
        raw in prop::collection::vec(
            (prop::collection::vec(0..3usize, 1..4), 0u64..1000),
            0..40,
        )
    ) {
        let tokens = ["malware", "benign", "grayware"];
        let mut seen = std::collections::HashSet::new();
        let entries: Vec<ManifestEntry> = raw
            .into_iter()
            .filter(|(_, tag)| seen.insert(*tag))
            .map(|(token_ids, tag)| ManifestEntry {
                sample_id: id_from(tag),
                raw_labels: token_ids.iter().map(|&t| tokens[t].to_string()).collect(),
            })
            .collect();
        let manifest = CorpusManifest { entries, source_path: "mem".to_string() };

        let first = apply_single_label_filter(&manifest, LabelPolicy::Lenient).unwrap();
        let refiltered = CorpusManifest {
            entries: first
                .labeled
                .iter()
                .map(|(id, label)| ManifestEntry {
                    sample_id: *id,
                    raw_labels: vec![label.as_str().to_string()],
                })
                .collect(),
            source_path: "mem".to_string(),
        };
        let second = apply_single_label_filter(&refiltered, LabelPolicy::Lenient).unwrap();
        prop_assert_eq!(&second.labeled, &first.labeled);
        prop_assert_eq!(second.dropped, 0);
    }

    /// Partition exactness and per-class stratification over 200 random
    /// corpora.
    #[test]
    fn split_partitions_and_stratifies(
        malware in 5usize..300,
        benign in 2usize..120,
        seed in 0u64..1000,
    ) {
        let samples: Vec<(Sha256Id, SampleLabel)> = (0..malware)
            .map(|i| (id_from(i as u64), SampleLabel::Malware))
            .chain((0..benign).map(|i| (id_from(1_000_000 + i as u64), SampleLabel::Benign)))
            .collect();
        let split = stratified_split(&samples, 0.75, seed).unwrap();

        let total = samples.len();
        prop_assert_eq!(split.train_ids.len() + split.test_ids.len(), total);
        let train_set: std::collections::HashSet<_> = split.train_ids.iter().collect();
        prop_assert_eq!(train_set.len(), split.train_ids.len());
        for id in &split.test_ids {
            prop_assert!(!train_set.contains(id));
        }

        let benign_ids: std::collections::HashSet<_> = samples
            .iter()
            .filter(|(_, l)| *l == SampleLabel::Benign)
            .map(|(id, _)| *id)
            .collect();
        for (ids, side) in [(&split.train_ids, "train"), (&split.test_ids, "test")] {
            let benign_here = ids.iter().filter(|id| benign_ids.contains(id)).count();
            let proportion = benign_here as f64 / ids.len() as f64;
            let corpus_proportion = benign as f64 / total as f64;
            let one_sample = 1.0 / ids.len() as f64;
            prop_assert!(
                (proportion - corpus_proportion).abs() < one_sample,
                "{side}: |{proportion} - {corpus_proportion}| >= {one_sample}"
            );
        }

        // Same inputs, same seed: identical output.
        let again = stratified_split(&samples, 0.75, seed).unwrap();
        prop_assert_eq!(split, again);
    }

    /// When the vocabulary covers every name, unigram counts sum to the
    /// truncated length.
    #[test]
    fn unigram_sum_rule(indices in calls_strategy(), length in 1usize..200) {
        let trace = trace_from(&indices);
        let all_names: Vec<usize> = (0..ALPHABET.len()).collect();
        let cover = trace_from(&all_names);
        let refs = [&cover];
        let vocab = build_ngram_vocab(&refs, 1, None).unwrap();
        let threshold = LengthThreshold::new(length).unwrap();
        let vector = featurize_ngram(&trace, threshold, &vocab);
        let expected = length.min(trace.calls.len()) as u64;
        prop_assert_eq!(vector.counts.iter().map(|&c| c as u64).sum::<u64>(), expected);
    }

    /// Window-count bound, with equality for a complete vocabulary.
    #[test]
    fn ngram_sum_bound(
        indices in prop::collection::vec(0..ALPHABET.len(), 0..80),
        length in 1usize..120,
        n in 1u8..=3,
    ) {
        let trace = trace_from(&indices);
        // Complete vocabulary: every n-gram over the whole alphabet
        // that actually occurs in the trace.
        let threshold = LengthThreshold::new(length).unwrap();
        let refs = [&trace];
        let vocab = match build_ngram_vocab(&refs, n, None) {
            Ok(vocab) => vocab,
            Err(_) => return Ok(()), // trace shorter than n
        };
        let vector = featurize_ngram(&trace, threshold, &vocab);
        let truncated = length.min(trace.calls.len());
        let bound = truncated.saturating_sub(n as usize - 1) as u64;
        let total: u64 = vector.counts.iter().map(|&c| c as u64).sum();
        prop_assert_eq!(total, bound, "complete vocabulary reaches the bound");
    }

    /// Permuting the truncated prefix never changes the unigram vector.
    #[test]
    fn unigram_order_invariance(
        indices in prop::collection::vec(0..ALPHABET.len(), 1..120),
        length in 1usize..150,
        shuffle_seed in 0u64..10_000,
    ) {
        use rand::seq::SliceRandom;
        let trace = trace_from(&indices);
        let threshold = LengthThreshold::new(length).unwrap();
        let refs = [&trace];
        let vocab = build_ngram_vocab(&refs, 1, None).unwrap();
        let baseline = featurize_ngram(&trace, threshold, &vocab);

        let cut = length.min(indices.len());
        let mut permuted = indices.clone();
        let mut rng = callgram::rng::seeded_rng(shuffle_seed);
        permuted[..cut].shuffle(&mut rng);
        let permuted_trace = trace_from(&permuted);
        let shuffled = featurize_ngram(&permuted_trace, threshold, &vocab);
        prop_assert_eq!(baseline.counts, shuffled.counts);
    }

    /// Counts grow monotonically with the truncation threshold.
    #[test]
    fn monotone_truncation(
        indices in calls_strategy(),
        l1 in 1usize..150,
        l2 in 1usize..150,
        n in 1u8..=3,
    ) {
        let (l1, l2) = (l1.min(l2), l1.max(l2));
        let trace = trace_from(&indices);
        let refs = [&trace];
        let vocab = match build_ngram_vocab(&refs, n, None) {
            Ok(vocab) => vocab,
            Err(_) => return Ok(()),
        };
        let short = featurize_ngram(&trace, LengthThreshold::new(l1).unwrap(), &vocab);
        let long = featurize_ngram(&trace, LengthThreshold::new(l2).unwrap(), &vocab);
        for (a, b) in short.counts.iter().zip(&long.counts) {
            prop_assert!(a <= b);
        }
    }

    /// Rebuilding a vocabulary from the same traces reproduces the
    /// mapping and fingerprint.
    #[test]
    fn vocabulary_determinism(
        corpus in prop::collection::vec(prop::collection::vec(0..ALPHABET.len(), 0..40), 1..20),
        n in 1u8..=3,
    ) {
        let traces: Vec<ApiTrace> = corpus.iter().map(|c| trace_from(c)).collect();
        let refs: Vec<&ApiTrace> = traces.iter().collect();
        match (
            build_ngram_vocab(&refs, n, None),
            build_ngram_vocab(&refs, n, None),
        ) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(a.fingerprint(), b.fingerprint());
                // Truncation is part of identity: a truncated rebuild may differ.
                let json = a.to_json_bytes();
                let reloaded =
                    callgram::featurize::NGramVocabulary::from_json_bytes(&json).unwrap();
                prop_assert_eq!(&a, &reloaded);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "determinism of the error case broke"),
        }
    }

    /// Truncating a trace always yields a prefix.
    #[test]
    fn truncation_is_a_prefix(indices in calls_strategy(), length in 1usize..200) {
        let trace = trace_from(&indices);
        let cut = truncate_trace(&trace, LengthThreshold::new(length).unwrap());
        prop_assert!(cut.len() == length.min(trace.calls.len()));
        prop_assert_eq!(cut, &trace.calls[..cut.len()]);
    }
}

fn labels_from_bits(bits: &[bool]) -> Vec<SampleLabel> {
    bits.iter()
        .map(|&b| if b { SampleLabel::Benign } else { SampleLabel::Malware })
        .collect()
}

proptest! {
    /// AUC is invariant under strictly monotone transforms of scores.
    #[test]
    fn auc_monotone_transform_invariance(
        raw in prop::collection::vec((0u8..10, any::<bool>()), 4..80),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 10.0).collect();
        let labels = labels_from_bits(&raw.iter().map(|(_, b)| *b).collect::<Vec<_>>());
        prop_assume!(labels.iter().any(|&l| l == SampleLabel::Benign));
        prop_assume!(labels.iter().any(|&l| l == SampleLabel::Malware));

        let base = roc_auc(&scores, &labels).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        let after = roc_auc(&transformed, &labels).unwrap();
        prop_assert!((base - after).abs() < 1e-12);
    }

    /// Flipping every label complements the AUC.
    #[test]
    fn auc_label_flip_identity(
        raw in prop::collection::vec((0u8..10, any::<bool>()), 4..80),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 10.0).collect();
        let labels = labels_from_bits(&raw.iter().map(|(_, b)| *b).collect::<Vec<_>>());
        prop_assume!(labels.iter().any(|&l| l == SampleLabel::Benign));
        prop_assume!(labels.iter().any(|&l| l == SampleLabel::Malware));

        let flipped: Vec<SampleLabel> = labels
            .iter()
            .map(|&l| match l {
                SampleLabel::Benign => SampleLabel::Malware,
                SampleLabel::Malware => SampleLabel::Benign,
            })
            .collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&scores, &flipped).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    /// The trapezoid under the ROC points equals the rank statistic,
    /// ties included.
    #[test]
    fn roc_area_equals_rank_auc(
        raw in prop::collection::vec((0u8..6, any::<bool>()), 4..80),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 6.0).collect();
        let labels = labels_from_bits(&raw.iter().map(|(_, b)| *b).collect::<Vec<_>>());
        prop_assume!(labels.iter().any(|&l| l == SampleLabel::Benign));
        prop_assume!(labels.iter().any(|&l| l == SampleLabel::Malware));

        let auc = roc_auc(&scores, &labels).unwrap();
        let curve = roc_curve(&scores, &labels).unwrap();
        prop_assert!((trapezoid_area(&curve.points) - auc).abs() < 1e-9);

        // FPR is non-decreasing along the descending-threshold order.
        for pair in curve.points.windows(2) {
            prop_assert!(pair[0].0 <= pair[1].0);
        }
    }
}
