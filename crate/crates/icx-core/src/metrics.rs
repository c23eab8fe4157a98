//! Quadratic weighted kappa and supporting classification metrics.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::formats::LabelVector;

/// Counts of (true class, predicted class) pairs; rows are the true class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(counts: Array2<u64>) -> Result<Self> {
        let k = counts.nrows();
        if k < 2 || counts.ncols() != k {
            return Err(Error::Validation(format!(
                "confusion matrix must be square with K >= 2, got {}x{}",
                k,
                counts.ncols()
            )));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::Validation("confusion matrix has no counts".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_rows(rows: &[&[u64]]) -> Result<Self> {
        let k = rows.len();
        let mut counts = Array2::zeros((k, k));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                counts[[i, j]] = c;
            }
        }
        ConfusionMatrix::new(counts)
    }

    pub fn classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Tallies `(true, predicted)` pairs into a confusion matrix.
pub fn confusion(labels: &LabelVector, predictions: &LabelVector) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Dimension(format!(
            "label count {} != prediction count {}",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.classes() != predictions.classes() {
        return Err(Error::Dimension(format!(
            "label class count {} != prediction class count {}",
            labels.classes(),
            predictions.classes()
        )));
    }
    let k = labels.classes() as usize;
    let mut counts = Array2::zeros((k, k));
    for (&t, &p) in labels.values().iter().zip(predictions.values()) {
        counts[[t as usize, p as usize]] += 1;
    }
    ConfusionMatrix::new(counts)
}

/// Quadratic weighted kappa.
///
/// `kappa = 1 - sum(w * O) / sum(w * E)` with weights
/// `w[i][j] = (i - j)^2 / (K - 1)^2`, `O` the observed matrix normalized to
/// total 1 and `E` the outer product of its marginals. The `(K - 1)^2`
/// normalization cancels in the ratio, so kappa is identical with raw
/// squared-distance weights; normalized weights are used so the intermediate
/// sums stay comparable across class counts.
///
/// When the expected-disagreement denominator is exactly zero (both raters
/// constant and equal) the statistic is undefined and an error is returned
/// rather than a sentinel.
pub fn qwk(conf: &ConfusionMatrix) -> Result<f64> {
    let k = conf.classes();
    let total = conf.total() as f64;
    let norm = ((k - 1) * (k - 1)) as f64;

    let row_marginal: Vec<f64> = conf
        .counts()
        .rows()
        .into_iter()
        .map(|r| r.iter().sum::<u64>() as f64 / total)
        .collect();
    let col_marginal: Vec<f64> = conf
        .counts()
        .columns()
        .into_iter()
        .map(|c| c.iter().sum::<u64>() as f64 / total)
        .collect();

    let mut observed = 0.0;
    let mut expected = 0.0;
    for (i, &row_m) in row_marginal.iter().enumerate() {
        for (j, &col_m) in col_marginal.iter().enumerate() {
            let w = ((i as f64 - j as f64) * (i as f64 - j as f64)) / norm;
            observed += w * (conf.counts()[[i, j]] as f64 / total);
            expected += w * row_m * col_m;
        }
    }

    if expected == 0.0 {
        return Err(Error::UndefinedMetric(
            "expected disagreement is zero (both raters constant and equal)".into(),
        ));
    }
    Ok(1.0 - observed / expected)
}

/// Fraction of diagonal mass.
pub fn accuracy(conf: &ConfusionMatrix) -> f64 {
    let diag: u64 = (0..conf.classes()).map(|i| conf.counts()[[i, i]]).sum();
    diag as f64 / conf.total() as f64
}
