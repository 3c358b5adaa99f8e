use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::spectral::spectral_clustering;

/// Two-class clustering scores under the better of the two label mappings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMetrics {
    pub accuracy: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn scores(pred: &[usize], truth: &[usize], swap: bool) -> ClusteringMetrics {
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        let p = if swap { 1 - p } else { p };
        confusion[t][p] += 1;
    }
    let n = pred.len() as f64;
    let accuracy = (confusion[0][0] + confusion[1][1]) as f64 / n;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for c in 0..2 {
        let tp = confusion[c][c] as f64;
        let actual = (confusion[c][0] + confusion[c][1]) as f64;
        let predicted = (confusion[0][c] + confusion[1][c]) as f64;
        let r = tp / actual;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        recall += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    ClusteringMetrics {
        accuracy,
        macro_recall: recall / 2.0,
        macro_f1: f1 / 2.0,
    }
}

/// Accuracy, macro recall and macro F1 for 0/1 labels; the label mapping
/// (identity or swapped) with the higher accuracy is used, then higher F1 and
/// recall on ties.
pub fn clustering_metrics(pred: &[usize], truth: &[usize]) -> Result<ClusteringMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "clustering_metrics",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.iter().chain(truth).any(|&l| l > 1) {
        return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
    }
    if !(truth.contains(&0) && truth.contains(&1)) {
        return Err(Error::InsufficientData("ground truth contains a single class".into()));
    }
    let direct = scores(pred, truth, false);
    let swapped = scores(pred, truth, true);
    let key = |m: &ClusteringMetrics| (m.accuracy, m.macro_f1, m.macro_recall);
    Ok(if key(&swapped) > key(&direct) { swapped } else { direct })
}

/// Pooled points with withheld labels (0 = enhanced, 1 = noisy).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEmbeddings {
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledEmbeddings {
    pub fn new(points: Matrix, labels: Vec<usize>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "labeled embeddings",
                expected: points.nrows(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) || !labels.contains(&0) || !labels.contains(&1) {
            return Err(Error::InvalidConfig("labels must be 0/1 with both classes present".into()));
        }
        Ok(Self { points, labels })
    }

    /// Stacks enhanced rows (label 0) above noisy rows (label 1).
    pub fn from_parts(enhanced: &Matrix, noisy: &Matrix) -> Result<Self> {
        if enhanced.ncols() != noisy.ncols() {
            return Err(Error::DimensionMismatch {
                context: "embedding width",
                expected: enhanced.ncols(),
                got: noisy.ncols(),
            });
        }
        let (a, b) = (enhanced.nrows(), noisy.nrows());
        let mut points = Matrix::zeros(a + b, enhanced.ncols());
        points.rows_mut(0, a).copy_from(enhanced);
        points.rows_mut(a, b).copy_from(noisy);
        let labels = (0..a + b).map(|i| usize::from(i >= a)).collect();
        Self::new(points, labels)
    }

    /// Two-way spectral clustering scored against the withheld labels.
    pub fn evaluate(&self, seed: u64) -> Result<ClusteringMetrics> {
        let pred = spectral_clustering(&self.points, 2, seed)?;
        clustering_metrics(&pred, &self.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_example() {
        let m = clustering_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.macro_recall, 0.75);
        assert!((m.macro_f1 - 11.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_swapped() {
        let t = [0, 1, 0, 1, 1];
        let c: Vec<usize> = t.iter().map(|l| 1 - l).collect();
        for pred in [&t[..], &c[..]] {
            let m = clustering_metrics(pred, &t).unwrap();
            assert_eq!((m.accuracy, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn single_class_truth_is_an_error() {
        assert!(clustering_metrics(&[0, 1], &[1, 1]).is_err());
    }
}
