//! Dense symmetric eigendecomposition and the few derived helpers the rest
//! of the crate needs.
//!
//! Matrices here are small (feature dimension is at most a few hundred), so
//! a cyclic Jacobi sweep is accurate and fast enough, and keeps results
//! bit-stable across platforms since no external backend is involved.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted in
/// descending order and eigenvectors as the corresponding columns. The input
/// is required to be square; symmetry is assumed (only the given entries are
/// read, the rotation updates keep the working copy symmetric).
pub fn sym_eigh(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }

    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = off_diagonal_norm(&m);
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());

    let eigenvalues = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    Ok((eigenvalues, eigenvectors))
}

fn off_diagonal_norm(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[[i, j]] * m[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Sample covariance (divisor `N - 1`) of already-centered rows.
pub fn covariance_of_centered(centered: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = centered.nrows();
    if n < 2 {
        return Err(Error::Validation(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    let mut cov = centered.t().dot(centered);
    cov.mapv_inplace(|x| x / (n as f64 - 1.0));
    Ok(cov)
}

/// Moore-Penrose pseudo-inverse of a full-row-rank matrix `w` (n x m, n <= m):
/// `w' = w^T (w w^T)^{-1}`.
pub fn pinv_full_row_rank(w: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let gram = w.dot(&w.t());
    let (vals, vecs) = sym_eigh(&gram.view())?;
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Err(Error::Rank("pseudo-inverse of a zero matrix".into()));
    }
    let cutoff = 1e-12 * max;
    for &val in vals.iter() {
        if val <= cutoff {
            return Err(Error::Rank(format!(
                "matrix is row-rank deficient (gram eigenvalue {val:.3e} below cutoff {cutoff:.3e})"
            )));
        }
    }
    // (w w^T)^{-1} = V diag(1/lambda) V^T
    let mut inv = Array2::<f64>::zeros(gram.raw_dim());
    for k in 0..vals.len() {
        let col = vecs.column(k);
        let scale = 1.0 / vals[k];
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                inv[[i, j]] += scale * col[i] * col[j];
            }
        }
    }
    Ok(w.t().dot(&inv))
}

/// Spectral condition number, computed from the eigenvalues of `a^T a`.
pub fn condition_number(a: &ArrayView2<f64>) -> Result<f64> {
    let gram = a.t().dot(a);
    let (vals, _) = sym_eigh(&gram.view())?;
    let max = vals.iter().cloned().fold(0.0_f64, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    if min <= 0.0 || max <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((max / min).sqrt())
}

/// Column means of a matrix.
pub fn column_means(a: &ArrayView2<f64>) -> Array1<f64> {
    a.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(a.ncols()))
}
