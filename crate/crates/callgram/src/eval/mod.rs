//! Classification metrics with benign as the positive class.
//!
//! Benign encodes to 1 and malware to 0, so "true positive" counts
//! benign samples recognized as benign. Degenerate denominators report
//! 0 with an explicit flag instead of NaN, keeping CSV output
//! machine-readable.

mod curves;

pub use curves::{pr_curve, roc_auc, roc_curve, trapezoid_area, CurveKind, CurvePoints};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SampleLabel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("predicted and actual label sequences have different lengths ({predicted} vs {actual})")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("cannot evaluate an empty sample set")]
    EmptyInput,
    #[error("ROC analysis needs both classes present")]
    SingleClass,
    #[error("precision-recall analysis needs at least one benign sample")]
    NoPositives,
}

/// Two-class confusion counts; positive class = benign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Benign predicted benign.
    pub true_pos: u64,
    /// Malware predicted benign.
    pub false_pos: u64,
    /// Benign predicted malware.
    pub false_neg: u64,
    /// Malware predicted malware.
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Tally predictions against ground truth.
pub fn confusion(
    predicted: &[SampleLabel],
    actual: &[SampleLabel],
) -> Result<ConfusionMatrix, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut matrix = ConfusionMatrix::default();
    for (&guess, &truth) in predicted.iter().zip(actual) {
        use SampleLabel::{Benign, Malware};
        match (truth, guess) {
            (Benign, Benign) => matrix.true_pos += 1,
            (Malware, Benign) => matrix.false_pos += 1,
            (Benign, Malware) => matrix.false_neg += 1,
            (Malware, Malware) => matrix.true_neg += 1,
        }
    }
    Ok(matrix)
}

/// Which metrics hit a zero denominator and were reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

/// Accuracy, precision, recall, and F1 from a confusion matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flags: DegenerateFlags,
}

/// `accuracy = (tp+tn)/total`, `precision = tp/(tp+fp)`,
/// `recall = tp/(tp+fn)`, `f1 = 2pr/(p+r)`; zero denominators yield 0
/// with the matching flag set.
pub fn compute_metrics(matrix: &ConfusionMatrix) -> Result<BasicMetrics, EvalError> {
    let total = matrix.total();
    if total == 0 {
        return Err(EvalError::EmptyInput);
    }
    let mut flags = DegenerateFlags::default();
    let accuracy = (matrix.true_pos + matrix.true_neg) as f64 / total as f64;
    let precision = match matrix.true_pos + matrix.false_pos {
        0 => {
            flags.precision = true;
            0.0
        }
        denominator => matrix.true_pos as f64 / denominator as f64,
    };
    let recall = match matrix.true_pos + matrix.false_neg {
        0 => {
            flags.recall = true;
            0.0
        }
        denominator => matrix.true_pos as f64 / denominator as f64,
    };
    let f1 = if precision + recall == 0.0 {
        flags.f1 = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BasicMetrics {
        accuracy,
        precision,
        recall,
        f1,
        flags,
    })
}

/// The full per-cell evaluation record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub confusion: ConfusionMatrix,
    pub n_samples: u64,
    pub flags: DegenerateFlags,
}

/// Score-based evaluation: thresholded confusion metrics plus ROC-AUC.
pub fn evaluate_scores(
    scores: &[f64],
    actual: &[SampleLabel],
    decision_threshold: f64,
) -> Result<MetricsReport, EvalError> {
    if scores.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: scores.len(),
            actual: actual.len(),
        });
    }
    let predicted: Vec<SampleLabel> = scores
        .iter()
        .map(|&score| {
            if score >= decision_threshold {
                SampleLabel::Benign
            } else {
                SampleLabel::Malware
            }
        })
        .collect();
    let matrix = confusion(&predicted, actual)?;
    let basic = compute_metrics(&matrix)?;
    let auc = roc_auc(scores, actual)?;
    Ok(MetricsReport {
        accuracy: basic.accuracy,
        precision: basic.precision,
        recall: basic.recall,
        f1: basic.f1,
        roc_auc: auc,
        confusion: matrix,
        n_samples: matrix.total(),
        flags: basic.flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use SampleLabel::{Benign, Malware};

    #[test]
    fn all_benign_agreement_fills_true_pos() {
        let labels = vec![Benign; 6];
        let matrix = confusion(&labels, &labels).unwrap();
        assert_eq!(
            matrix,
            ConfusionMatrix {
                true_pos: 6,
                ..ConfusionMatrix::default()
            }
        );
    }

    #[test]
    fn complement_predictions_zero_the_diagonal() {
        let actual = vec![Benign, Malware, Benign, Malware];
        let predicted = vec![Malware, Benign, Malware, Benign];
        let matrix = confusion(&predicted, &actual).unwrap();
        assert_eq!(matrix.true_pos, 0);
        assert_eq!(matrix.true_neg, 0);
        assert_eq!(matrix.false_pos, 2);
        assert_eq!(matrix.false_neg, 2);
    }

    #[test]
    fn hand_built_ten_sample_tally() {
        let actual = vec![
            Benign, Benign, Benign, Benign, Malware, Malware, Malware, Malware, Malware, Malware,
        ];
        let predicted = vec![
            Benign, Benign, Benign, Malware, Benign, Malware, Malware, Malware, Malware, Malware,
        ];
        let matrix = confusion(&predicted, &actual).unwrap();
        assert_eq!(
            matrix,
            ConfusionMatrix {
                true_pos: 3,
                false_pos: 1,
                false_neg: 1,
                true_neg: 5,
            }
        );
        let metrics = compute_metrics(&matrix).unwrap();
        assert_eq!(metrics.precision, 0.75);
        assert_eq!(metrics.recall, 0.75);
        assert_eq!(metrics.f1, 0.75);
        assert_eq!(metrics.accuracy, 0.8);
        assert!(!metrics.flags.any());
    }

    #[test]
    fn zero_division_reports_zero_with_flag() {
        let matrix = ConfusionMatrix {
            true_pos: 0,
            false_pos: 0,
            false_neg: 2,
            true_neg: 8,
        };
        let metrics = compute_metrics(&matrix).unwrap();
        assert_eq!(metrics.precision, 0.0);
        assert!(metrics.flags.precision);
        assert_eq!(metrics.recall, 0.0);
        assert!(!metrics.flags.recall);
        assert_eq!(metrics.f1, 0.0);
        assert!(metrics.flags.f1);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let matrix = ConfusionMatrix {
            true_pos: 3,
            false_pos: 0,
            false_neg: 0,
            true_neg: 7,
        };
        let metrics = compute_metrics(&matrix).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!(metrics.f1, 1.0);
    }

    #[test]
    fn f1_harmonic_identity_holds() {
        for (tp, fp, fneg, tn) in [(3, 1, 1, 5), (10, 3, 7, 80), (1, 9, 9, 1)] {
            let matrix = ConfusionMatrix {
                true_pos: tp,
                false_pos: fp,
                false_neg: fneg,
                true_neg: tn,
            };
            let m = compute_metrics(&matrix).unwrap();
            let expected = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            assert!((m.f1 - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        assert_eq!(
            confusion(&[Benign], &[]).unwrap_err(),
            EvalError::LengthMismatch {
                predicted: 1,
                actual: 0
            }
        );
        assert_eq!(confusion(&[], &[]).unwrap_err(), EvalError::EmptyInput);
    }

    #[test]
    fn evaluate_scores_uses_the_ge_rule() {
        let actual = vec![Benign, Malware];
        let report = evaluate_scores(&[0.5, 0.49], &actual, 0.5).unwrap();
        assert_eq!(report.confusion.true_pos, 1);
        assert_eq!(report.confusion.true_neg, 1);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.n_samples, 2);
    }
}
