//! Subcommand implementations. Each maps onto one library operation
//! and reports failures as a single diagnostic line.

use std::error::Error;
use std::path::Path;

use callgram::corpus::{
    corpus_stats, load_corpus, stratified_split, Corpus, DatasetSplit, LoadOptions, TraceLayout,
};
use callgram::eval::{evaluate_scores, pr_curve, roc_curve};
use callgram::experiment::{
    emit_report, write_synthetic_corpus, ConfigFile, ExperimentError, ResolvedConfig, SweepResult,
    SyntheticSpec,
};
use callgram::featurize::{
    build_ngram_vocab, featurize_corpus, FeatureMatrix, FeatureVocabs, LengthThreshold,
    NGramVocabulary, Variant, VocabSet,
};
use callgram::forest::{
    load_model, predict_proba, save_model, train_forest, FeatureRule, ForestParams,
};
use rayon::prelude::*;

use crate::{
    EvalArgs, FeaturizeArgs, IngestArgs, ReportArgs, SweepArgs, SynthArgs, TrainArgs, VocabArgs,
};

pub type OpResult = Result<(), Box<dyn Error>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ScopeArg {
    Train,
    Dataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum RoleArg {
    Train,
    Test,
    All,
}

fn fail(message: String) -> Box<dyn Error> {
    message.into()
}

fn load(args: &crate::CorpusArgs) -> Result<Corpus, Box<dyn Error>> {
    let layout = match &args.calls_path {
        Some(path) => TraceLayout::with_calls_path(path),
        None => TraceLayout::default(),
    };
    let options = LoadOptions {
        layout,
        strict_missing: args.strict,
        ..LoadOptions::default()
    };
    Ok(load_corpus(&args.traces, &args.manifest, &options)?)
}

fn read_split(path: &Path) -> Result<DatasetSplit, Box<dyn Error>> {
    let bytes = std::fs::read(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
    Ok(DatasetSplit::from_json_bytes(&bytes)?)
}

fn parse_length(value: usize) -> Result<LengthThreshold, Box<dyn Error>> {
    LengthThreshold::new(value).ok_or_else(|| fail("length must be at least 1".to_string()))
}

pub fn ingest(args: IngestArgs) -> OpResult {
    let corpus = load(&args.corpus)?;
    let labeled = corpus.labeled_ids();
    let split = stratified_split(&labeled, args.train_fraction, args.seed)?;
    std::fs::write(&args.split_out, split.to_json_bytes())
        .map_err(|e| fail(format!("cannot write {}: {e}", args.split_out.display())))?;

    let stats = corpus_stats(&labeled);
    let summary = serde_json::json!({
        "stats": stats,
        "dropped_ambiguous": corpus.dropped_ambiguous,
        "skipped_missing": corpus.skipped_missing,
        "train": split.train_ids.len(),
        "test": split.test_ids.len(),
        "seed": split.seed,
        "rng_algorithm": split.rng_algorithm,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!(
        "ingest: {} samples ({} malware / {} benign), split {}/{}, wrote {}",
        stats.total,
        stats.malware,
        stats.benign,
        split.train_ids.len(),
        split.test_ids.len(),
        args.split_out.display()
    );
    Ok(())
}

pub fn synth(args: SynthArgs) -> OpResult {
    let spec = SyntheticSpec {
        n_samples: args.samples,
        benign_fraction: args.benign_fraction,
        alphabet_size: args.alphabet,
        min_length: args.min_length,
        max_length: args.max_length,
        divergence: args.divergence,
        seed: args.seed,
    };
    let corpus = write_synthetic_corpus(&spec, &args.out)?;
    eprintln!(
        "synth: wrote {} traces and manifest.csv under {}",
        corpus.len(),
        args.out.display()
    );
    Ok(())
}

pub fn vocab(args: VocabArgs) -> OpResult {
    let corpus = load(&args.corpus)?;
    let truncation = args.truncate.map(parse_length).transpose()?;

    let vocabulary = match args.scope {
        ScopeArg::Dataset => {
            let refs: Vec<_> = corpus.traces().iter().collect();
            build_ngram_vocab(&refs, args.n, truncation)?
        }
        ScopeArg::Train => {
            let split_path = args
                .split
                .as_deref()
                .ok_or_else(|| fail("--scope train needs --split".to_string()))?;
            let split = read_split(split_path)?;
            let train = corpus.select(&split.train_ids)?;
            build_ngram_vocab(&train, args.n, truncation)?
        }
    };

    std::fs::write(&args.out, vocabulary.to_json_bytes())
        .map_err(|e| fail(format!("cannot write {}: {e}", args.out.display())))?;
    eprintln!(
        "vocab: {} distinct {}-grams -> {}",
        vocabulary.size(),
        args.n,
        args.out.display()
    );
    Ok(())
}

fn read_vocab(path: &Path) -> Result<NGramVocabulary, Box<dyn Error>> {
    let bytes = std::fs::read(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
    Ok(NGramVocabulary::from_json_bytes(&bytes)?)
}

pub fn featurize(args: FeaturizeArgs) -> OpResult {
    let variant = Variant::parse(&args.variant)
        .ok_or_else(|| fail(format!("unknown variant {:?}", args.variant)))?;
    let corpus = load(&args.corpus)?;
    let length = parse_length(args.length)?;

    let selected: Vec<&callgram::corpus::ApiTrace> = match (args.role, &args.split) {
        (RoleArg::All, _) => corpus.traces().iter().collect(),
        (role, Some(split_path)) => {
            let split = read_split(split_path)?;
            let ids = if role == RoleArg::Train {
                split.train_ids
            } else {
                split.test_ids
            };
            corpus.select(&ids)?
        }
        (_, None) => return Err(fail("--role train/test needs --split".to_string())),
    };

    let single;
    let set;
    let vocabs = match variant {
        Variant::Combined => {
            let (uni, bi, tri) = match (&args.uni, &args.bi, &args.tri) {
                (Some(uni), Some(bi), Some(tri)) => (uni, bi, tri),
                _ => return Err(fail("combined needs --uni, --bi, and --tri".to_string())),
            };
            set = VocabSet::from_parts(read_vocab(uni)?, read_vocab(bi)?, read_vocab(tri)?)?;
            FeatureVocabs::Combined(&set)
        }
        _ => {
            let path = args
                .vocab
                .as_deref()
                .ok_or_else(|| fail("single-order variants need --vocab".to_string()))?;
            single = read_vocab(path)?;
            let expected = variant.order().expect("single-order variant");
            if single.order() != expected {
                return Err(fail(format!(
                    "variant {variant} needs an order-{expected} vocabulary, got order {}",
                    single.order()
                )));
            }
            FeatureVocabs::Single(&single)
        }
    };

    let matrix = featurize_corpus(&selected, length, vocabs)?;
    matrix.write_file(&args.out)?;
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, matrix.to_csv_bytes())
            .map_err(|e| fail(format!("cannot write {}: {e}", csv_path.display())))?;
    }
    eprintln!(
        "featurize: {} rows x {} features ({variant}, length {length}) -> {}",
        matrix.n_rows(),
        matrix.dimension(),
        args.out.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> OpResult {
    let matrix = FeatureMatrix::read_file(&args.matrix)?;
    let features_per_split = match args.features.as_str() {
        "sqrt" => FeatureRule::Sqrt,
        "all" => FeatureRule::All,
        other => {
            let count: usize = other
                .parse()
                .map_err(|_| fail(format!("bad --features value {other:?}")))?;
            if count == 0 {
                return Err(fail("--features count must be >= 1".to_string()));
            }
            FeatureRule::Fixed(count)
        }
    };
    let params = ForestParams {
        n_trees: args.trees,
        max_depth: (args.max_depth > 0).then_some(args.max_depth),
        min_samples_split: args.min_samples_split,
        features_per_split,
        bootstrap: !args.no_bootstrap,
        seed: args.seed,
    };
    let model = train_forest(&matrix, &params)?;
    save_model(&model, &args.out)?;
    eprintln!(
        "train: {} trees on {} rows x {} features -> {}",
        params.n_trees,
        matrix.n_rows(),
        matrix.dimension(),
        args.out.display()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> OpResult {
    let model = load_model(&args.model)?;
    let matrix = FeatureMatrix::read_file(&args.matrix)?;
    if model.vocab_fingerprints != matrix.vocab_fingerprints() {
        return Err(fail(
        "vocabulary fingerprint mismatch between model and matrix; they were built from different vocabularies"
            .to_string(),
        ));
    }

    let scores: Result<Vec<f64>, _> = (0..matrix.n_rows())
        .into_par_iter()
        .map(|row| predict_proba(&model, &matrix.row_dense(row)))
        .collect();
    let scores = scores?;
    let actual = matrix.labels();

    let metrics = evaluate_scores(&scores, actual, args.threshold)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)
            .map_err(|e| fail(format!("cannot create {}: {e}", out.display())))?;
        let mut metrics_bytes = serde_json::to_vec_pretty(&metrics)?;
        metrics_bytes.push(b'\n');
        std::fs::write(out.join("metrics.json"), metrics_bytes)
            .map_err(|e| fail(format!("cannot write metrics.json: {e}")))?;
        for (build, kind) in [(roc_curve(&scores, actual), "roc"), (pr_curve(&scores, actual), "pr")] {
            let curve = build?;
            let comment = format!(
                "kind={kind} variant={} length={} seed={}",
                matrix.variant(),
                matrix.threshold(),
                model.params.seed
            );
            std::fs::write(out.join(format!("{kind}.csv")), curve.to_csv_bytes(&comment))
                .map_err(|e| fail(format!("cannot write {kind}.csv: {e}")))?;
        }
        eprintln!("eval: wrote metrics.json, roc.csv, pr.csv under {}", out.display());
    }
    Ok(())
}

fn parse_list<T, E: std::fmt::Display>(
    text: &str,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Result<Vec<T>, Box<dyn Error>> {
    text.split(',')
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .map(|part| parse(part).map_err(|e| fail(format!("bad list entry {part:?}: {e}"))))
        .collect()
}

fn apply_overrides(resolved: &mut ResolvedConfig, args: &SweepArgs) -> OpResult {
    if let Some(out) = &args.out {
        resolved.output_dir = out.clone();
    }
    if args.no_cache {
        resolved.cache = false;
    }
    if let Some(seeds) = &args.seeds {
        resolved.experiment.seeds = parse_list(seeds, str::parse::<u64>)?;
    }
    if let Some(lengths) = &args.lengths {
        resolved.experiment.lengths = parse_list(lengths, |part| {
            part.parse::<usize>()
                .map_err(|e| e.to_string())
                .and_then(|value| {
                    LengthThreshold::new(value).ok_or_else(|| "must be >= 1".to_string())
                })
        })?;
    }
    if let Some(variants) = &args.variants {
        resolved.experiment.variants = parse_list(variants, |part| {
            Variant::parse(part).ok_or("unknown variant")
        })?;
    }
    if let Some(trees) = args.trees {
        resolved.experiment.forest.n_trees = trees;
    }
    resolved.experiment.validate()?;
    Ok(())
}

pub fn sweep(args: SweepArgs) -> OpResult {
    let mut resolved = ConfigFile::load(&args.config)?.resolve()?;
    apply_overrides(&mut resolved, &args)?;

    eprintln!("sweep: loading corpus");
    let corpus = resolved.corpus.load()?;
    eprintln!(
        "sweep: {} cells over {} samples",
        resolved.experiment.cell_count(),
        corpus.len()
    );

    let cache_dir = resolved.cache.then(|| resolved.output_dir.join("cache"));
    let outcome = callgram::experiment::run_sweep(
        &corpus,
        &resolved.experiment,
        cache_dir.as_deref(),
    );

    match outcome {
        Ok(result) => {
            emit_report(&result, &resolved.output_dir)?;
            eprintln!(
                "sweep: {} cells done, reports under {}",
                result.cells.len(),
                resolved.output_dir.display()
            );
            Ok(())
        }
        Err(ExperimentError::PartialSweep {
            completed,
            failures,
        }) => {
            // Keep what succeeded so a rerun can resume from the cache.
            emit_report(&completed, &resolved.output_dir)?;
            for failure in &failures {
                eprintln!(
                    "sweep: cell (variant={}, length={}, seed={}) failed: {}",
                    failure.variant, failure.length, failure.seed, failure.message
                );
            }
            Err(fail(format!(
                "{} of {} cells failed; completed cells were kept",
                failures.len(),
                completed.cells.len() + failures.len()
            )))
        }
        Err(error) => Err(error.into()),
    }
}

pub fn report(args: ReportArgs) -> OpResult {
    let bytes = std::fs::read(&args.from)
        .map_err(|e| fail(format!("cannot read {}: {e}", args.from.display())))?;
    let result = SweepResult::from_json_bytes(&bytes)?;
    emit_report(&result, &args.out)?;
    eprintln!(
        "report: {} cells re-emitted under {}",
        result.cells.len(),
        args.out.display()
    );
    Ok(())
}
