//! Gini impurity and the deterministic best-split search.
//!
//! Thresholds are evaluated at midpoints between consecutive distinct
//! sorted values of each candidate feature. Ties in impurity decrease
//! break toward the lowest feature index, then the lowest threshold;
//! together with integer class counts this makes the search
//! reproducible across platforms.

use crate::corpus::SampleLabel;

use super::ForestError;

/// Gini impurity of a two-class node: `1 - Σ (n_c / N)²`.
///
/// Counts are indexed by class encoding (malware 0, benign 1).
pub fn gini_impurity(class_counts: &[u64; 2]) -> Result<f64, ForestError> {
    let total = class_counts[0] + class_counts[1];
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    Ok(gini(class_counts))
}

pub(crate) fn gini(class_counts: &[u64; 2]) -> f64 {
    let total = (class_counts[0] + class_counts[1]) as f64;
    let p0 = class_counts[0] as f64 / total;
    let p1 = class_counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

/// Drop in weighted impurity from splitting `parent` into `left`/`right`.
pub(crate) fn impurity_decrease(parent: &[u64; 2], left: &[u64; 2], right: &[u64; 2]) -> f64 {
    let n = (parent[0] + parent[1]) as f64;
    let n_left = (left[0] + left[1]) as f64;
    let n_right = (right[0] + right[1]) as f64;
    gini(parent) - (n_left / n) * gini(left) - (n_right / n) * gini(right)
}

/// A chosen split: rows with `value <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Search `candidates` (ascending feature indices) for the split that
/// maximizes weighted impurity decrease over the given node rows.
///
/// Returns `None` when no candidate threshold strictly reduces
/// impurity. `value_of(row, feature)` reads the feature matrix;
/// `class_of(row)` the encoded label.
pub(crate) fn best_split_impl(
    rows: &[u32],
    candidates: &[usize],
    value_of: &dyn Fn(u32, usize) -> u32,
    class_of: &dyn Fn(u32) -> usize,
    scratch: &mut Vec<(u32, u8)>,
) -> Option<SplitChoice> {
    let mut parent = [0u64; 2];
    for &row in rows {
        parent[class_of(row)] += 1;
    }

    let mut best: Option<SplitChoice> = None;
    for &feature in candidates {
        scratch.clear();
        scratch.extend(
            rows.iter()
                .map(|&row| (value_of(row, feature), class_of(row) as u8)),
        );
        scratch.sort_unstable();

        let mut left = [0u64; 2];
        for i in 0..scratch.len() - 1 {
            left[scratch[i].1 as usize] += 1;
            let (value, next) = (scratch[i].0, scratch[i + 1].0);
            if value == next {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let decrease = impurity_decrease(&parent, &left, &right);
            if decrease <= 0.0 {
                continue;
            }
            // Strict improvement only: candidates arrive in ascending
            // (feature, threshold) order, so keeping the first maximum
            // realizes the tie-break rule.
            if best.map_or(true, |b| decrease > b.impurity_decrease) {
                best = Some(SplitChoice {
                    feature,
                    threshold: (value as f64 + next as f64) / 2.0,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

/// Best split over an explicit small matrix; rows are count vectors.
///
/// Candidate features must be ascending and in range.
pub fn best_split(
    rows: &[Vec<u32>],
    labels: &[SampleLabel],
    candidates: &[usize],
) -> Option<SplitChoice> {
    assert_eq!(rows.len(), labels.len(), "rows and labels must be parallel");
    if rows.is_empty() {
        return None;
    }
    let row_ids: Vec<u32> = (0..rows.len() as u32).collect();
    let mut scratch = Vec::with_capacity(rows.len());
    best_split_impl(
        &row_ids,
        candidates,
        &|row, feature| rows[row as usize][feature],
        &|row| labels[row as usize].as_index(),
        &mut scratch,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use SampleLabel::{Benign, Malware};

    #[test]
    fn gini_known_values() {
        assert_eq!(gini_impurity(&[2, 2]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[7, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[3, 1]).unwrap(), 0.375);
        assert!(matches!(gini_impurity(&[0, 0]), Err(ForestError::EmptyNode)));
    }

    #[test]
    fn perfect_separation_at_midpoint() {
        let rows = vec![vec![0], vec![0], vec![5], vec![5]];
        let labels = vec![Malware, Malware, Benign, Benign];
        let choice = best_split(&rows, &labels, &[0]).unwrap();
        assert_eq!(choice.feature, 0);
        assert_eq!(choice.threshold, 2.5);
        assert_eq!(choice.impurity_decrease, 0.5);
    }

    #[test]
    fn identical_rows_have_no_split() {
        let rows = vec![vec![3, 1], vec![3, 1], vec![3, 1]];
        let labels = vec![Malware, Benign, Malware];
        assert_eq!(best_split(&rows, &labels, &[0, 1]), None);
    }

    #[test]
    fn pure_node_has_no_improving_split() {
        let rows = vec![vec![0], vec![9]];
        let labels = vec![Benign, Benign];
        assert_eq!(best_split(&rows, &labels, &[0]), None);
    }

    #[test]
    fn tie_breaks_toward_lowest_feature_then_threshold() {
        // Both features separate perfectly; feature 0 must win.
        let rows = vec![vec![0, 10], vec![1, 20]];
        let labels = vec![Malware, Benign];
        let choice = best_split(&rows, &labels, &[0, 1]).unwrap();
        assert_eq!(choice.feature, 0);
        assert_eq!(choice.threshold, 0.5);

        // One feature, equal decrease at 0.5 and 1.5: lowest wins.
        let rows = vec![vec![0], vec![1], vec![2]];
        let labels = vec![Malware, Benign, Malware];
        let choice = best_split(&rows, &labels, &[0]).unwrap();
        assert_eq!(choice.threshold, 0.5);
    }
}
