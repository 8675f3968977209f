//! Rank-based ROC-AUC and exact ROC / precision-recall curves.
//!
//! The AUC is the Mann–Whitney statistic: concordant benign–malware
//! score pairs plus half credit for ties, normalized by the pair count.
//! Pair tallies are integers, so the value is exactly reproducible.
//! Curves carry one point per distinct score, in descending threshold
//! order; the trapezoidal area under the ROC points equals the
//! rank-based AUC.

use serde::{Deserialize, Serialize};

use crate::corpus::SampleLabel;

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        }
    }
}

/// Curve points with their parallel score cutoffs.
///
/// ROC points are `(false positive rate, true positive rate)`; PR
/// points are `(recall, precision)`. A sample counts as predicted
/// benign at cutoff `t` iff its score is `>= t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    #[serde(with = "threshold_serde")]
    pub thresholds: Vec<f64>,
}

/// JSON cannot carry infinities, so the ROC curve's infinite top cutoff
/// round-trips as the string `"inf"`.
mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Threshold {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        let encoded: Vec<Threshold> = values
            .iter()
            .map(|&value| {
                if value.is_finite() {
                    Threshold::Finite(value)
                } else {
                    Threshold::Named(value.to_string())
                }
            })
            .collect();
        encoded.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Threshold>::deserialize(deserializer)?
            .into_iter()
            .map(|raw| match raw {
                Threshold::Finite(value) => Ok(value),
                Threshold::Named(text) => text
                    .parse::<f64>()
                    .map_err(|_| serde::de::Error::custom(format!("bad threshold {text:?}"))),
            })
            .collect()
    }
}

impl CurvePoints {
    /// CSV export: an optional comment line, then `threshold,x,y` rows.
    pub fn to_csv_bytes(&self, comment: &str) -> Vec<u8> {
        let mut out = String::new();
        if !comment.is_empty() {
            out.push_str("# ");
            out.push_str(comment);
            out.push('\n');
        }
        out.push_str("threshold,x,y\n");
        for (threshold, (x, y)) in self.thresholds.iter().zip(&self.points) {
            out.push_str(&format!("{threshold},{x},{y}\n"));
        }
        out.into_bytes()
    }
}

/// Sum of trapezoids under a polyline.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|pair| {
            let (x1, y1) = pair[0];
            let (x2, y2) = pair[1];
            (x2 - x1) * (y1 + y2) / 2.0
        })
        .sum()
}

fn class_totals(actual: &[SampleLabel]) -> (u64, u64) {
    let benign = actual
        .iter()
        .filter(|&&label| label == SampleLabel::Benign)
        .count() as u64;
    (benign, actual.len() as u64 - benign)
}

fn check_paired(scores: &[f64], actual: &[SampleLabel]) -> Result<(), EvalError> {
    if scores.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: scores.len(),
            actual: actual.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Scores sorted ascending with their labels, grouped by equal score.
fn sorted_groups(scores: &[f64], actual: &[SampleLabel]) -> Vec<(f64, u64, u64)> {
    let mut paired: Vec<(f64, SampleLabel)> =
        scores.iter().copied().zip(actual.iter().copied()).collect();
    paired.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for (score, label) in paired {
        match groups.last_mut() {
            Some((current, benign, malware)) if *current == score => {
                if label == SampleLabel::Benign {
                    *benign += 1;
                } else {
                    *malware += 1;
                }
            }
            _ => {
                let benign = (label == SampleLabel::Benign) as u64;
                groups.push((score, benign, 1 - benign));
            }
        }
    }
    groups
}

/// Mann–Whitney ROC-AUC: `(concordant + 0.5 * ties) / (benign * malware)`.
pub fn roc_auc(scores: &[f64], actual: &[SampleLabel]) -> Result<f64, EvalError> {
    check_paired(scores, actual)?;
    let (n_benign, n_malware) = class_totals(actual);
    if n_benign == 0 || n_malware == 0 {
        return Err(EvalError::SingleClass);
    }

    let mut concordant = 0u64;
    let mut tied = 0u64;
    let mut malware_below = 0u64;
    for (_, benign_here, malware_here) in sorted_groups(scores, actual) {
        concordant += benign_here * malware_below;
        tied += benign_here * malware_here;
        malware_below += malware_here;
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / (n_benign as f64 * n_malware as f64))
}

/// ROC curve: `(FPR, TPR)` at every distinct score cutoff, descending,
/// with the `(0, 0)` endpoint at an infinite cutoff. The lowest cutoff
/// classifies everything benign, closing the curve at `(1, 1)`.
pub fn roc_curve(scores: &[f64], actual: &[SampleLabel]) -> Result<CurvePoints, EvalError> {
    check_paired(scores, actual)?;
    let (n_benign, n_malware) = class_totals(actual);
    if n_benign == 0 || n_malware == 0 {
        return Err(EvalError::SingleClass);
    }

    let groups = sorted_groups(scores, actual);
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let mut benign_at_or_above = 0u64;
    let mut malware_at_or_above = 0u64;
    for (score, benign_here, malware_here) in groups.iter().rev() {
        benign_at_or_above += benign_here;
        malware_at_or_above += malware_here;
        points.push((
            malware_at_or_above as f64 / n_malware as f64,
            benign_at_or_above as f64 / n_benign as f64,
        ));
        thresholds.push(*score);
    }
    Ok(CurvePoints {
        kind: CurveKind::Roc,
        points,
        thresholds,
    })
}

/// Precision-recall curve: `(recall, precision)` at every distinct
/// score cutoff, descending. At the lowest cutoff recall is 1 and
/// precision is the benign base rate.
pub fn pr_curve(scores: &[f64], actual: &[SampleLabel]) -> Result<CurvePoints, EvalError> {
    check_paired(scores, actual)?;
    let (n_benign, _) = class_totals(actual);
    if n_benign == 0 {
        return Err(EvalError::NoPositives);
    }

    let groups = sorted_groups(scores, actual);
    let mut points = Vec::with_capacity(groups.len());
    let mut thresholds = Vec::with_capacity(groups.len());
    let mut true_pos = 0u64;
    let mut predicted_pos = 0u64;
    for (score, benign_here, malware_here) in groups.iter().rev() {
        true_pos += benign_here;
        predicted_pos += benign_here + malware_here;
        points.push((
            true_pos as f64 / n_benign as f64,
            true_pos as f64 / predicted_pos as f64,
        ));
        thresholds.push(*score);
    }
    Ok(CurvePoints {
        kind: CurveKind::Pr,
        points,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use SampleLabel::{Benign, Malware};

    #[test]
    fn perfect_separation_gives_auc_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let actual = [Benign, Benign, Malware, Malware];
        assert_eq!(roc_auc(&scores, &actual).unwrap(), 1.0);
        let curve = roc_curve(&scores, &actual).unwrap();
        assert!(curve.points.contains(&(0.0, 1.0)));
    }

    #[test]
    fn all_ties_give_half() {
        let scores = [0.5; 6];
        let actual = [Benign, Malware, Malware, Benign, Malware, Malware];
        assert_eq!(roc_auc(&scores, &actual).unwrap(), 0.5);
        let curve = roc_curve(&scores, &actual).unwrap();
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(curve.thresholds, vec![f64::INFINITY, 0.5]);
    }

    #[test]
    fn matches_small_pairwise_oracle() {
        let scores = [0.1, 0.4, 0.4, 0.8, 0.35];
        let actual = [Malware, Benign, Malware, Benign, Malware];
        // Pairs (benign, malware): (0.4 vs 0.1)+, (0.4 vs 0.4)=, (0.4 vs
        // 0.35)+, (0.8 vs everything)+: concordant 5, tied 1, of 6.
        assert_eq!(roc_auc(&scores, &actual).unwrap(), (5.0 + 0.5) / 6.0);
    }

    #[test]
    fn trapezoid_area_matches_rank_auc_with_ties() {
        let scores = [0.2, 0.2, 0.7, 0.7, 0.7, 0.9, 0.1];
        let actual = [Malware, Benign, Benign, Malware, Benign, Benign, Malware];
        let auc = roc_auc(&scores, &actual).unwrap();
        let curve = roc_curve(&scores, &actual).unwrap();
        assert!((trapezoid_area(&curve.points) - auc).abs() < 1e-9);
    }

    #[test]
    fn single_class_is_rejected() {
        assert_eq!(
            roc_auc(&[0.1, 0.2], &[Benign, Benign]).unwrap_err(),
            EvalError::SingleClass
        );
        assert_eq!(
            pr_curve(&[0.1, 0.2], &[Malware, Malware]).unwrap_err(),
            EvalError::NoPositives
        );
    }

    #[test]
    fn pr_perfect_separation_keeps_precision_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let actual = [Benign, Benign, Malware, Malware];
        let curve = pr_curve(&scores, &actual).unwrap();
        for (threshold, (recall, precision)) in curve.thresholds.iter().zip(&curve.points) {
            if *threshold >= 0.8 {
                assert_eq!(*precision, 1.0);
            }
            assert!(*recall >= 0.0 && *recall <= 1.0);
        }
        let (last_recall, last_precision) = *curve.points.last().unwrap();
        assert_eq!(last_recall, 1.0);
        assert_eq!(last_precision, 0.5);
    }

    #[test]
    fn pr_uninformative_scores_sit_at_base_rate() {
        let mut actual = vec![Malware; 97];
        actual.extend([Benign, Benign, Benign]);
        let scores = vec![0.4; 100];
        let curve = pr_curve(&scores, &actual).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0], (1.0, 0.03));
    }

    #[test]
    fn pr_points_recomputed_from_threshold_confusions() {
        let scores = [0.9, 0.1, 0.5, 0.5, 0.3, 0.75, 0.2];
        let actual = [Benign, Malware, Benign, Malware, Malware, Malware, Benign];
        let curve = pr_curve(&scores, &actual).unwrap();
        for (threshold, (recall, precision)) in curve.thresholds.iter().zip(&curve.points) {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fneg = 0u64;
            for (score, label) in scores.iter().zip(&actual) {
                match (score >= threshold, label) {
                    (true, Benign) => tp += 1,
                    (true, Malware) => fp += 1,
                    (false, Benign) => fneg += 1,
                    (false, Malware) => {}
                }
            }
            assert_eq!(*recall, tp as f64 / (tp + fneg) as f64);
            assert_eq!(*precision, tp as f64 / (tp + fp) as f64);
        }
    }

    #[test]
    fn csv_export_has_comment_and_rows() {
        let scores = [0.9, 0.1];
        let actual = [Benign, Malware];
        let curve = roc_curve(&scores, &actual).unwrap();
        let text = String::from_utf8(curve.to_csv_bytes("kind=roc variant=unigram")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# kind=roc variant=unigram");
        assert_eq!(lines[1], "threshold,x,y");
        assert_eq!(lines.len(), 2 + curve.points.len());
        assert!(lines[2].starts_with("inf,"));
    }
}
