//! Principal component analysis: redundancy appraisal of the feature space
//! and the whitening step of the independent-component fit.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::formats::FeatureMatrix;
use crate::linalg;

/// Relative eigenvalue cutoff below which a direction is treated as
/// numerically rank deficient. Relative, because activation scales vary
/// across exported networks.
pub const EPS_WHITEN: f64 = 1e-10;

/// Fitted principal component model.
///
/// `components` columns are the principal directions in descending
/// eigenvalue order; the sign of each column is fixed by making its
/// largest-magnitude entry positive so serialization is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub components: Array2<f64>,
    pub eigenvalues: Array1<f64>,
}

impl PcaModel {
    /// Count of eigenvalues above the relative rank cutoff.
    pub fn numerical_rank(&self) -> usize {
        let max = self.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        if max <= 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|&&v| v > EPS_WHITEN * max)
            .count()
    }
}

/// Eigendecomposition of the sample covariance (divisor `N - 1`) of the
/// centered data.
pub fn fit_pca(features: &FeatureMatrix) -> Result<PcaModel> {
    fit_pca_array(&features.to_f64().view())
}

/// [`fit_pca`] for data already widened to `f64`.
pub fn fit_pca_array(x: &ArrayView2<f64>) -> Result<PcaModel> {
    let x = x.to_owned();
    if x.nrows() < 2 {
        return Err(Error::Validation(format!(
            "pca needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    let mean = linalg::column_means(&x.view());
    let centered = &x - &mean;
    let cov = linalg::covariance_of_centered(&centered.view())?;
    let (mut eigenvalues, mut components) = linalg::sym_eigh(&cov.view())?;

    // covariance is positive semi-definite; clip the tiny negatives the
    // iteration can leave behind
    eigenvalues.mapv_inplace(|v| v.max(0.0));

    for mut col in components.columns_mut() {
        let mut pivot = 0;
        let mut best = -1.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }

    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// For each threshold, the minimal component count whose cumulative
/// eigenvalue fraction reaches it.
///
/// Thresholds must lie in `(0, 1]`. The comparison carries a `1e-12` slack
/// so a threshold of exactly 1.0 returns the numerical rank rather than
/// chasing rounding residue in the trailing eigenvalues. Zero-variance
/// models report 0 components for every threshold.
pub fn explained_variance_report(
    model: &PcaModel,
    thresholds: &[f64],
) -> Result<Vec<(f64, usize)>> {
    for &t in thresholds {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Validation(format!("threshold {t} outside (0, 1]")));
        }
    }
    let total: f64 = model.eigenvalues.sum();
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        if total <= 0.0 {
            out.push((t, 0));
            continue;
        }
        let mut cum = 0.0;
        let mut k = model.eigenvalues.len();
        for (i, &v) in model.eigenvalues.iter().enumerate() {
            cum += v;
            if cum / total >= t - 1e-12 {
                k = i + 1;
                break;
            }
        }
        out.push((t, k));
    }
    Ok(out)
}

/// Projects onto the top `k` principal directions and rescales each to unit
/// variance, so the output's sample covariance is the identity.
pub fn whiten(features: &FeatureMatrix, model: &PcaModel, k: usize) -> Result<Array2<f64>> {
    whiten_array(&features.to_f64().view(), model, k)
}

/// [`whiten`] for data already widened to `f64`.
pub fn whiten_array(x: &ArrayView2<f64>, model: &PcaModel, k: usize) -> Result<Array2<f64>> {
    let m = model.mean.len();
    if x.ncols() != m {
        return Err(Error::Dimension(format!(
            "whiten expects {} columns, got {}",
            m,
            x.ncols()
        )));
    }
    if k == 0 || k > m {
        return Err(Error::Validation(format!(
            "whiten dimension {k} outside 1..={m}"
        )));
    }
    let max = model.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = EPS_WHITEN * max;
    let usable = model
        .eigenvalues
        .iter()
        .filter(|&&v| v > cutoff && v > 0.0)
        .count();
    if k > usable {
        return Err(Error::Rank(format!(
            "whitening to {k} dims exceeds the usable rank {usable}"
        )));
    }
    let centered = x - &model.mean;
    let basis = model.components.slice(ndarray::s![.., ..k]);
    let mut z = centered.dot(&basis);
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        let scale = 1.0 / model.eigenvalues[j].sqrt();
        col.mapv_inplace(|v| v * scale);
    }
    Ok(z)
}

/// The `k x m` matrix sending centered data to the whitened space:
/// `diag(eigenvalues[..k])^{-1/2} * components[.., ..k]^T`.
pub fn whitening_matrix(model: &PcaModel, k: usize) -> Array2<f64> {
    let m = model.mean.len();
    let mut w = Array2::<f64>::zeros((k, m));
    for j in 0..k {
        let scale = 1.0 / model.eigenvalues[j].sqrt();
        for i in 0..m {
            w[[j, i]] = model.components[[i, j]] * scale;
        }
    }
    w
}
