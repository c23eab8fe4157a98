//! Exact 2-D stochastic neighbor embedding for the qualitative comparison
//! between the full feature space and the reduced component space.
//!
//! Exact `O(N^2)` affinities and gradients: the inputs here are a few
//! thousand points at most, and exactness keeps the test oracles simple.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::formats::LabelVector;

/// Fixed class palette for embeddings (5 colors, cycled past class 4).
pub const CLASS_PALETTE: [&str; 5] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#aa3377"];

/// Schedule and shape of the embedding run.
#[derive(Debug, Clone)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// Affinity multiplier during the early iterations.
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// Iteration at which momentum switches from early to late.
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

/// Symmetrized input affinities.
#[derive(Debug, Clone)]
pub struct Affinities {
    /// N x N symmetric matrix, zero diagonal, entries sum to 1.
    pub p: Array2<f64>,
    /// Set when a degenerate row (duplicate points) needed the 1e-12 floor.
    pub floored: bool,
}

fn squared_distances(data: &ArrayView2<f64>) -> Array2<f64> {
    let n = data.nrows();
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let mut s = 0.0;
            for k in 0..data.ncols() {
                let diff = data[[i, k]] - data[[j, k]];
                s += diff * diff;
            }
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

/// Gaussian conditional affinities with a per-row bandwidth found by
/// bisection so each row's entropy matches `log(perplexity)` within 1e-5
/// (at most 50 steps), then symmetrized: `p = (p_c + p_c^T) / 2N`.
pub fn pairwise_affinities(data: &ArrayView2<f64>, perplexity: f64) -> Result<Affinities> {
    let n = data.nrows();
    if n < 10 {
        return Err(Error::Validation(format!(
            "affinities need at least 10 points, got {n}"
        )));
    }
    if perplexity.is_nan() || perplexity <= 1.0 || perplexity >= n as f64 / 3.0 {
        return Err(Error::Validation(format!(
            "perplexity {perplexity} outside (1, N/3)"
        )));
    }
    let d2 = squared_distances(data);
    let target_entropy = perplexity.ln();
    let mut conditional = Array2::<f64>::zeros((n, n));
    let mut floored = false;

    for i in 0..n {
        let mut beta = 1.0_f64;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;

        if (0..n).any(|j| j != i && d2[[i, j]] == 0.0) {
            // duplicate points collapse the row onto each other
            floored = true;
        }

        let mut row = vec![0.0_f64; n];
        for _ in 0..50 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let p = (-beta * d2[[i, j]]).exp();
                row[j] = p;
                sum += p;
                weighted += d2[[i, j]] * p;
            }
            // an underflowed row means the bandwidth is far too narrow;
            // treat it as zero entropy and widen
            let entropy = if sum > 0.0 {
                sum.ln() + beta * weighted / sum
            } else {
                0.0
            };
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_max) / 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
            }
        }

        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            // every weight underflowed within the step budget: floor the
            // row and renormalize, which leaves it uniform
            floored = true;
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = if j == i { 0.0 } else { 1.0 / (n as f64 - 1.0) };
            }
        } else {
            for slot in row.iter_mut() {
                *slot /= sum;
            }
        }
        for j in 0..n {
            conditional[[i, j]] = row[j];
        }
    }

    let mut p = Array2::<f64>::zeros((n, n));
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..i {
            let v = (conditional[[i, j]] + conditional[[j, i]]) * scale;
            p[[i, j]] = v;
            p[[j, i]] = v;
        }
    }
    Ok(Affinities { p, floored })
}

/// Embedding run outcome: final coordinates and the divergence trace
/// (computed each iteration against the plain, un-exaggerated affinities).
#[derive(Debug, Clone)]
pub struct TsneResult {
    pub embedding: Array2<f64>,
    pub kl_trace: Vec<f64>,
}

/// Gradient descent on the divergence between input affinities and the
/// Student-t neighbor distribution of the 2-D embedding, with early
/// exaggeration and a momentum schedule. Deterministic per `cfg.seed`; the
/// embedding is re-centered every iteration.
pub fn run_tsne(data: &ArrayView2<f64>, cfg: &TsneConfig) -> Result<TsneResult> {
    if cfg.iterations < 250 {
        return Err(Error::Validation(format!(
            "need at least 250 iterations, got {}",
            cfg.iterations
        )));
    }
    let affinities = pairwise_affinities(data, cfg.perplexity)?;
    let p = affinities.p;
    let n = p.nrows();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y = Array2::from_shape_fn((n, 2), |_| {
        let g: f64 = StandardNormal.sample(&mut rng);
        1e-2 * g
    });
    let mut velocity = Array2::<f64>::zeros((n, 2));
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    let mut q_weight = Array2::<f64>::zeros((n, n));
    for iter in 0..cfg.iterations {
        // Student-t weights w = 1 / (1 + |y_i - y_j|^2) and their total
        let mut w_sum = 0.0;
        for i in 0..n {
            for j in 0..i {
                let dy0 = y[[i, 0]] - y[[j, 0]];
                let dy1 = y[[i, 1]] - y[[j, 1]];
                let w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                q_weight[[i, j]] = w;
                q_weight[[j, i]] = w;
                w_sum += 2.0 * w;
            }
        }

        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.momentum_switch {
            cfg.momentum_early
        } else {
            cfg.momentum_late
        };

        let mut kl = 0.0;
        let mut grad = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q_weight[[i, j]];
                let q = (w / w_sum).max(1e-12);
                let pij = p[[i, j]];
                if pij > 0.0 {
                    kl += pij * (pij / q).ln();
                }
                let coeff = 4.0 * (exaggeration * pij - q) * w;
                grad[[i, 0]] += coeff * (y[[i, 0]] - y[[j, 0]]);
                grad[[i, 1]] += coeff * (y[[i, 1]] - y[[j, 1]]);
            }
        }
        if !kl.is_finite() {
            return Err(Error::Divergence(format!(
                "divergence became non-finite at iteration {iter}"
            )));
        }
        kl_trace.push(kl);

        for v in velocity.iter_mut() {
            *v *= momentum;
        }
        velocity = &velocity - &(&grad * cfg.learning_rate);
        y = &y + &velocity;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "embedding became non-finite at iteration {iter}"
            )));
        }

        // re-center
        for col in 0..2 {
            let mean = y.column(col).sum() / n as f64;
            y.column_mut(col).mapv_inplace(|v| v - mean);
        }
    }

    Ok(TsneResult {
        embedding: y,
        kl_trace,
    })
}

/// Renders the embedding as an SVG scatter, one circle per row in row
/// order, colored by label through [`CLASS_PALETTE`].
pub fn embedding_to_svg(
    embedding: &ArrayView2<f64>,
    labels: Option<&LabelVector>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let svg = embedding_svg_string(embedding, labels)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// The SVG document for [`embedding_to_svg`].
pub fn embedding_svg_string(
    embedding: &ArrayView2<f64>,
    labels: Option<&LabelVector>,
) -> Result<String> {
    const SIZE: f64 = 640.0;
    const MARGIN: f64 = 20.0;
    let n = embedding.nrows();
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {n} embedded points",
                l.len()
            )));
        }
    }

    let span = |col: usize| -> (f64, f64) {
        let min = embedding
            .column(col)
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let max = embedding
            .column(col)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    };
    let place = |v: f64, (min, max): (f64, f64)| -> f64 {
        if max > min {
            MARGIN + (v - min) / (max - min) * (SIZE - 2.0 * MARGIN)
        } else {
            SIZE / 2.0
        }
    };
    let (xs, ys) = (span(0), span(1));

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"#ffffff\"/>\n"
    ));
    for i in 0..n {
        let cx = place(embedding[[i, 0]], xs);
        let cy = place(embedding[[i, 1]], ys);
        let color = match labels {
            Some(l) => CLASS_PALETTE[l.values()[i] as usize % CLASS_PALETTE.len()],
            None => CLASS_PALETTE[0],
        };
        out.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3\" fill=\"{color}\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// N-point simplex in N-1 dimensions: all pairwise distances equal.
    fn simplex(n: usize) -> Array2<f64> {
        let mut x = Array2::<f64>::zeros((n, n - 1));
        for i in 0..n - 1 {
            x[[i, i]] = 1.0;
        }
        // last vertex (a, ..., a) equidistant from the unit vectors:
        // a^2 (n-1) - 2a - 1 = 0
        let a = (1.0 - (n as f64).sqrt()) / (n as f64 - 1.0);
        for j in 0..n - 1 {
            x[[n - 1, j]] = a;
        }
        x
    }

    fn clusters(n_per: usize, seed: u64) -> (Array2<f64>, LabelVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(-20.0, 0.0, 0.0), (20.0, 0.0, 0.0), (0.0, 30.0, 5.0)];
        let n = 3 * n_per;
        let mut x = Array2::<f64>::zeros((n, 3));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            let (cx, cy, cz) = centers[c];
            let g0: f64 = StandardNormal.sample(&mut rng);
            let g1: f64 = StandardNormal.sample(&mut rng);
            let g2: f64 = StandardNormal.sample(&mut rng);
            x[[i, 0]] = cx + g0;
            x[[i, 1]] = cy + g1;
            x[[i, 2]] = cz + g2;
            labels.push(c as u8);
        }
        (x, LabelVector::new(labels, 3).unwrap())
    }

    #[test]
    fn simplex_rows_are_uniform() {
        // equidistant points: every off-diagonal affinity equal
        let x = simplex(12);
        let aff = pairwise_affinities(&x.view(), 3.0).unwrap();
        let expected = 1.0 / (12.0 * 11.0);
        for i in 0..12 {
            for j in 0..12 {
                if i != j {
                    assert_abs_diff_eq!(aff.p[[i, j]], expected, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn row_entropy_hits_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((60, 5), |_| rng.random_range(-1.0..1.0));
        let perplexity = 12.0;
        let aff = pairwise_affinities(&x.view(), perplexity).unwrap();
        assert!(!aff.floored);

        // recompute each conditional row's entropy from the symmetrized
        // matrix is not possible; redo the row construction directly
        let d2 = squared_distances(&x.view());
        let n = 60;
        for i in 0..n {
            // recover the conditional row by re-running one bisection
            let mut beta = 1.0_f64;
            let (mut beta_min, mut beta_max) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut entropy = 0.0;
            for _ in 0..50 {
                let mut sum = 0.0;
                let mut weighted = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let p = (-beta * d2[[i, j]]).exp();
                    sum += p;
                    weighted += d2[[i, j]] * p;
                }
                entropy = sum.ln() + beta * weighted / sum;
                let diff = entropy - perplexity.ln();
                if diff.abs() < 1e-5 {
                    break;
                }
                if diff > 0.0 {
                    beta_min = beta;
                    beta = if beta_max.is_infinite() {
                        beta * 2.0
                    } else {
                        (beta + beta_max) / 2.0
                    };
                } else {
                    beta_max = beta;
                    beta = if beta_min.is_infinite() {
                        beta / 2.0
                    } else {
                        (beta + beta_min) / 2.0
                    };
                }
            }
            assert!(
                (entropy - perplexity.ln()).abs() < 1e-5,
                "row {i} entropy {entropy} vs target {}",
                perplexity.ln()
            );
        }
    }

    #[test]
    fn affinities_are_symmetric_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((40, 4), |_| rng.random_range(-2.0..2.0));
        let aff = pairwise_affinities(&x.view(), 10.0).unwrap();
        for i in 0..40 {
            assert_eq!(aff.p[[i, i]], 0.0);
            for j in 0..40 {
                assert_eq!(aff.p[[i, j]], aff.p[[j, i]]);
                assert!(aff.p[[i, j]] >= 0.0);
            }
        }
        assert_abs_diff_eq!(aff.p.sum(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn duplicates_are_flagged_and_finite() {
        let mut x = Array2::<f64>::zeros((12, 3));
        for i in 2..12 {
            for j in 0..3 {
                x[[i, j]] = (i * 3 + j) as f64;
            }
        }
        // rows 0 and 1 are exact duplicates at the origin
        let aff = pairwise_affinities(&x.view(), 3.0).unwrap();
        assert!(aff.floored);
        assert!(aff.p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(aff.p.sum(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn underflowing_rows_take_the_floor() {
        // points so far apart that every Gaussian weight underflows at the
        // initial bandwidth; the floor keeps the row finite
        let mut x = Array2::<f64>::zeros((12, 1));
        for i in 0..12 {
            x[[i, 0]] = i as f64 * 1.0e9;
        }
        let aff = pairwise_affinities(&x.view(), 3.0).unwrap();
        assert!(aff.floored);
        assert!(aff.p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(aff.p.sum(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_leaves_affinities_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = Array2::from_shape_fn((30, 3), |_| rng.random_range(-1.0..1.0));
        // rotation about the z axis by 0.7 rad plus a translation
        let (s, c) = (0.7_f64.sin(), 0.7_f64.cos());
        let mut rotated = Array2::<f64>::zeros((30, 3));
        for i in 0..30 {
            rotated[[i, 0]] = c * x[[i, 0]] - s * x[[i, 1]] + 5.0;
            rotated[[i, 1]] = s * x[[i, 0]] + c * x[[i, 1]] - 2.0;
            rotated[[i, 2]] = x[[i, 2]] + 0.5;
        }
        let a = pairwise_affinities(&x.view(), 8.0).unwrap();
        let b = pairwise_affinities(&rotated.view(), 8.0).unwrap();
        for (u, v) in a.p.iter().zip(b.p.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-10);
        }
    }

    #[test]
    fn clusters_separate_in_the_embedding() {
        let (x, labels) = clusters(100, 1);
        let cfg = TsneConfig {
            perplexity: 30.0,
            iterations: 500,
            seed: 3,
            ..TsneConfig::default()
        };
        let result = run_tsne(&x.view(), &cfg).unwrap();
        let y = &result.embedding;

        let mut intra = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        for i in 0..300 {
            for j in 0..i {
                let d = ((y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2)).sqrt();
                if labels.values()[i] == labels.values()[j] {
                    intra.0 += d;
                    intra.1 += 1;
                } else {
                    inter.0 += d;
                    inter.1 += 1;
                }
            }
        }
        let intra_mean = intra.0 / intra.1 as f64;
        let inter_mean = inter.0 / inter.1 as f64;
        assert!(
            intra_mean < inter_mean,
            "intra {intra_mean} not below inter {inter_mean}"
        );
    }

    #[test]
    fn kl_trace_is_nonnegative_and_settles() {
        let (x, _) = clusters(40, 2);
        let cfg = TsneConfig {
            perplexity: 15.0,
            iterations: 500,
            seed: 5,
            ..TsneConfig::default()
        };
        let result = run_tsne(&x.view(), &cfg).unwrap();
        assert!(result.kl_trace.iter().all(|&k| k >= 0.0));

        // trailing 50-iteration window means are non-increasing after the
        // exaggeration phase
        let windows: Vec<f64> = result.kl_trace[250..]
            .chunks(50)
            .filter(|c| c.len() == 50)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for w in windows.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "window means increased: {:?}", windows);
        }
    }

    #[test]
    fn same_seed_reproduces_the_embedding() {
        let (x, _) = clusters(20, 7);
        let cfg = TsneConfig {
            perplexity: 10.0,
            iterations: 260,
            seed: 11,
            ..TsneConfig::default()
        };
        let a = run_tsne(&x.view(), &cfg).unwrap();
        let b = run_tsne(&x.view(), &cfg).unwrap();
        assert_eq!(a.embedding, b.embedding);
    }

    #[test]
    fn embedding_is_centered() {
        let (x, _) = clusters(20, 8);
        let cfg = TsneConfig {
            perplexity: 10.0,
            iterations: 300,
            seed: 2,
            ..TsneConfig::default()
        };
        let result = run_tsne(&x.view(), &cfg).unwrap();
        for col in 0..2 {
            let mean = result.embedding.column(col).sum() / 60.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn svg_empty_embedding() {
        let y = Array2::<f64>::zeros((0, 2));
        let svg = embedding_svg_string(&y.view(), None).unwrap();
        assert!(svg.starts_with("<svg "));
        assert!(!svg.contains("<circle"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn svg_three_points_in_row_order() {
        let y = ndarray::array![[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]];
        let labels = LabelVector::new(vec![0, 1, 2], 5).unwrap();
        let svg = embedding_svg_string(&y.view(), Some(&labels)).unwrap();
        let circles: Vec<&str> = svg.lines().filter(|l| l.starts_with("<circle")).collect();
        assert_eq!(circles.len(), 3);
        assert!(circles[0].contains(CLASS_PALETTE[0]));
        assert!(circles[1].contains(CLASS_PALETTE[1]));
        assert!(circles[2].contains(CLASS_PALETTE[2]));
        // leftmost point first: x = 0 maps to the margin
        assert!(circles[0].contains("cx=\"20.00\""));
        assert!(circles[2].contains("cx=\"620.00\""));
    }

    #[test]
    fn svg_golden_fixture() {
        let y = ndarray::array![[-1.0, 0.0], [1.0, 0.0]];
        let labels = LabelVector::new(vec![0, 4], 5).unwrap();
        let svg = embedding_svg_string(&y.view(), Some(&labels)).unwrap();
        let want = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">\n\
             <rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n\
             <circle cx=\"20.00\" cy=\"320.00\" r=\"3\" fill=\"#4477aa\"/>\n\
             <circle cx=\"620.00\" cy=\"320.00\" r=\"3\" fill=\"#aa3377\"/>\n\
             </svg>\n";
        assert_eq!(svg, want);
    }

    #[test]
    fn too_few_points_rejected() {
        let x = Array2::<f64>::zeros((5, 2));
        assert!(pairwise_affinities(&x.view(), 2.0).is_err());
    }

    #[test]
    fn perplexity_bounds_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((30, 2), |_| rng.random_range(-1.0..1.0_f64));
        assert!(pairwise_affinities(&x.view(), 10.1).is_err()); // >= N/3
        assert!(pairwise_affinities(&x.view(), 1.0).is_err());
        assert!(pairwise_affinities(&x.view(), 9.9).is_ok());
    }

    #[test]
    fn label_length_mismatch_rejected() {
        let y = Array2::<f64>::zeros((3, 2));
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        assert!(embedding_svg_string(&y.view(), Some(&labels)).is_err());
    }
}
