//! Report emission.
//!
//! Layout under the output directory:
//!
//! ```text
//! cells.csv          one row per completed cell
//! aggregate.csv      one row per (variant, length) group
//! curves/<variant>_<length>_<seed>_{roc,pr}.csv
//! provenance.json    run identity (the only file with a timestamp)
//! sweep_result.json  full machine-readable result, re-emittable
//! ```
//!
//! All floating point values print in shortest round-trip form, so an
//! independent pass over `cells.csv` recovers the exact f64 values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{aggregate_runs, AggregateResult, ExperimentError, MetricAggregate, SweepResult};

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ExperimentError::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// The per-cell CSV, in (variant, length, seed) order.
pub(crate) fn cells_csv(result: &SweepResult) -> Vec<u8> {
    let mut out = String::from(
        "variant,length,seed,accuracy,precision,recall,f1,roc_auc,tp,fp,fn,tn\n",
    );
    for cell in &result.cells {
        let m = &cell.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            cell.variant,
            cell.length,
            cell.seed,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.roc_auc,
            m.confusion.true_pos,
            m.confusion.false_pos,
            m.confusion.false_neg,
            m.confusion.true_neg,
        )
        .expect("writing to a string cannot fail");
    }
    out.into_bytes()
}

fn push_aggregate(out: &mut String, aggregate: &MetricAggregate) {
    write!(
        out,
        ",{},{},{}",
        aggregate.mean, aggregate.stddev, aggregate.cv_pct
    )
    .expect("writing to a string cannot fail");
}

/// The aggregate CSV, one row per (variant, length) group.
pub(crate) fn aggregate_csv(aggregate: &AggregateResult) -> Vec<u8> {
    let mut out = String::from("variant,length,n_seeds");
    for metric in ["accuracy", "precision", "recall", "f1", "roc_auc"] {
        write!(out, ",{metric}_mean,{metric}_stddev,{metric}_cv_pct")
            .expect("writing to a string cannot fail");
    }
    out.push('\n');
    for group in &aggregate.groups {
        write!(out, "{},{},{}", group.variant, group.length, group.n_seeds)
            .expect("writing to a string cannot fail");
        push_aggregate(&mut out, &group.accuracy);
        push_aggregate(&mut out, &group.precision);
        push_aggregate(&mut out, &group.recall);
        push_aggregate(&mut out, &group.f1);
        push_aggregate(&mut out, &group.roc_auc);
        out.push('\n');
    }
    out.into_bytes()
}

/// Write every report artifact for a sweep result.
///
/// Deterministic for a fixed result: re-emitting unchanged results
/// produces byte-identical files.
pub fn emit_report(result: &SweepResult, out_dir: &Path) -> Result<AggregateResult, ExperimentError> {
    let aggregate = aggregate_runs(result);

    write_file(&out_dir.join("cells.csv"), &cells_csv(result))?;
    write_file(&out_dir.join("aggregate.csv"), &aggregate_csv(&aggregate))?;

    for cell in &result.cells {
        let base: PathBuf = out_dir.join("curves");
        for (curve, kind) in [(&cell.roc, "roc"), (&cell.pr, "pr")] {
            let comment = format!(
                "kind={kind} variant={} length={} seed={}",
                cell.variant, cell.length, cell.seed
            );
            let name = format!("{}_{}_{}_{kind}.csv", cell.variant, cell.length, cell.seed);
            write_file(&base.join(name), &curve.to_csv_bytes(&comment))?;
        }
    }

    let mut provenance =
        serde_json::to_vec_pretty(&result.provenance).expect("provenance serialization");
    provenance.push(b'\n');
    write_file(&out_dir.join("provenance.json"), &provenance)?;
    write_file(&out_dir.join("sweep_result.json"), &result.to_json_bytes())?;

    Ok(aggregate)
}
