use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};

/// Percentage of rows whose label ranks among the `k` most probable
/// classes. Equal probabilities rank the lower class index first.
pub fn topk_accuracy<R: AsRef<[f64]>>(probs: &[R], labels: &[usize], k: usize) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(GefError::validation(format!(
            "{} probability rows but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(GefError::validation("accuracy over an empty set"));
    }
    let mut hits = 0usize;
    for (row, &y) in probs.iter().zip(labels) {
        let row = row.as_ref();
        let n = row.len();
        if k == 0 || k > n {
            return Err(GefError::validation(format!("k = {k} with {n} classes")));
        }
        if y >= n {
            return Err(GefError::Index { index: y, size: n });
        }
        let py = row[y];
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &p)| p > py || (p == py && j < y))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / probs.len() as f64)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = j;
        }
    }
    best
}

/// Percentage of equal pairs.
pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(GefError::validation(format!(
            "accuracy over {} predictions and {} labels",
            pred.len(),
            gold.len()
        )));
    }
    let hits = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Sub-field accuracies keyed like the report columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldAccuracy {
    pub s: f64,
    pub c: f64,
    pub f: f64,
    pub i: f64,
    pub t: f64,
}

impl FieldAccuracy {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            s: a[0],
            c: a[1],
            f: a[2],
            i: a[3],
            t: a[4],
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.s, self.c, self.f, self.i, self.t]
    }

    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 5.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub top1: f64,
    pub top3: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fields: Option<FieldAccuracy>,
}

impl AccuracyReport {
    pub fn from_probs<R: AsRef<[f64]>>(probs: &[R], labels: &[usize]) -> Result<Self> {
        Ok(Self {
            top1: topk_accuracy(probs, labels, 1)?,
            top3: topk_accuracy(probs, labels, 3)?,
            fields: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Six rows over four classes. Label ranks, with ties going to the
    /// lower index: 0, 1, 3, 2, 3, 2.
    fn fixture() -> (Vec<Vec<f64>>, Vec<usize>) {
        let probs = vec![
            vec![0.7, 0.1, 0.1, 0.1],
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.3, 0.3, 0.3, 0.1],
            vec![0.1, 0.5, 0.2, 0.2],
        ];
        (probs, vec![0, 1, 0, 2, 3, 3])
    }

    #[test]
    fn hand_computed_fixture() {
        let (p, y) = fixture();
        assert!((topk_accuracy(&p, &y, 1).unwrap() - 100.0 / 6.0).abs() < 1e-12);
        assert!((topk_accuracy(&p, &y, 2).unwrap() - 200.0 / 6.0).abs() < 1e-12);
        assert!((topk_accuracy(&p, &y, 3).unwrap() - 400.0 / 6.0).abs() < 1e-12);
        assert_eq!(topk_accuracy(&p, &y, 4).unwrap(), 100.0);
    }

    #[test]
    fn k_out_of_range() {
        let (p, y) = fixture();
        assert!(topk_accuracy(&p, &y, 5).is_err());
        assert!(topk_accuracy(&p, &y, 0).is_err());
        assert!(topk_accuracy(&p, &[0, 1], 1).is_err());
        assert!(matches!(
            topk_accuracy(&p[..1], &[4], 1),
            Err(GefError::Index { index: 4, size: 4 })
        ));
    }

    #[test]
    fn one_hot_is_perfect() {
        let p: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let y: Vec<usize> = (0..5).collect();
        assert_eq!(topk_accuracy(&p, &y, 1).unwrap(), 100.0);
    }

    #[test]
    fn argmax_prefers_low_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
