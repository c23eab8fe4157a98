//! Linear classification heads: one over the full feature space and one
//! over the reduced component space, scored with the quadratic weighted
//! kappa.
//!
//! The head is a multinomial logistic regression fitted by full-batch
//! gradient descent with an L2 penalty. Kappa is used for evaluation and
//! selection only, never as the training loss: cross-entropy keeps the fit
//! convex and reproducible.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::formats::LabelVector;
use crate::metrics;

/// What the head consumes: raw feature vectors or independent components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Features,
    IndependentComponents,
}

/// Linear scoring head: `scores = inputs * weights^T + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// K x d class-score matrix.
    pub weights: Array2<f64>,
    /// Per-class offset.
    pub bias: Array1<f64>,
    pub input_kind: InputKind,
}

impl LinearHead {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Training configuration for [`fit_head`].
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Standardize each input column before fitting; the statistics are
    /// folded back into the returned weights so the head applies to raw
    /// inputs.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            l2: 1e-4,
            learning_rate: 0.1,
            epochs: 500,
            seed: 0,
            standardize: true,
        }
    }
}

fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut p = scores.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}

fn cross_entropy(probs: &Array2<f64>, labels: &[u8], l2: f64, weights: &Array2<f64>) -> f64 {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[[i, y as usize]].max(1e-300).ln();
    }
    loss /= n;
    loss + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Fits a multinomial logistic head by full-batch gradient descent.
///
/// The training loss is non-increasing across epochs: when a step would
/// increase it, the step size is halved and the step retried, down to a
/// floor, at which point training stops early. Deterministic per
/// `cfg.seed`, which controls the small random initialization.
pub fn fit_head(
    inputs: &ArrayView2<f64>,
    labels: &LabelVector,
    kind: InputKind,
    cfg: &FitConfig,
) -> Result<LinearHead> {
    let n = inputs.nrows();
    let d = inputs.ncols();
    let k = labels.classes() as usize;
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            n
        )));
    }
    if n < k {
        return Err(Error::Validation(format!(
            "need at least K={k} samples, got {n}"
        )));
    }
    let mut seen = vec![false; k];
    for &y in labels.values() {
        seen[y as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Validation(format!(
            "class {missing} is absent from the training labels"
        )));
    }
    if cfg.l2 < 0.0 || cfg.epochs == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::Validation(
            "fit config needs l2 >= 0, epochs >= 1, learning_rate > 0".into(),
        ));
    }

    // column statistics, folded back into the weights on return
    let (mu, sigma) = if cfg.standardize {
        let mu = inputs.mean_axis(Axis(0)).unwrap();
        let mut sigma = Array1::<f64>::zeros(d);
        for (j, col) in inputs.columns().into_iter().enumerate() {
            let var = col.iter().map(|v| (v - mu[j]) * (v - mu[j])).sum::<f64>() / n as f64;
            let s = var.sqrt();
            sigma[j] = if s > 1e-12 { s } else { 1.0 };
        }
        (mu, sigma)
    } else {
        (Array1::zeros(d), Array1::ones(d))
    };
    let z = Array2::from_shape_fn((n, d), |(i, j)| (inputs[[i, j]] - mu[j]) / sigma[j]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = Array2::from_shape_fn((k, d), |_| {
        let g: f64 = StandardNormal.sample(&mut rng);
        0.01 * g
    });
    let mut bias = Array1::<f64>::zeros(k);

    let mut probs = softmax_rows(&(z.dot(&weights.t()) + &bias));
    let mut loss = cross_entropy(&probs, labels.values(), cfg.l2, &weights);
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("initial loss is {loss}")));
    }

    let inv_n = 1.0 / n as f64;
    let mut lr = cfg.learning_rate;
    'epochs: for _ in 0..cfg.epochs {
        // gradient of cross-entropy + l2 at the current point
        let mut delta = probs.clone();
        for (i, &y) in labels.values().iter().enumerate() {
            delta[[i, y as usize]] -= 1.0;
        }
        let grad_w = delta.t().dot(&z) * inv_n + &weights * cfg.l2;
        let grad_b = delta.sum_axis(Axis(0)) * inv_n;

        loop {
            let trial_w = &weights - &(&grad_w * lr);
            let trial_b = &bias - &(&grad_b * lr);
            let trial_probs = softmax_rows(&(z.dot(&trial_w.t()) + &trial_b));
            let trial_loss = cross_entropy(&trial_probs, labels.values(), cfg.l2, &trial_w);
            if !trial_loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "training loss became {trial_loss}"
                )));
            }
            if trial_loss <= loss {
                weights = trial_w;
                bias = trial_b;
                probs = trial_probs;
                loss = trial_loss;
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                break 'epochs; // converged to working precision
            }
        }
    }

    // fold the standardization back so the head applies to raw inputs
    let mut raw_weights = Array2::<f64>::zeros((k, d));
    let mut raw_bias = bias.clone();
    for c in 0..k {
        for j in 0..d {
            raw_weights[[c, j]] = weights[[c, j]] / sigma[j];
            raw_bias[c] -= weights[[c, j]] * mu[j] / sigma[j];
        }
    }

    Ok(LinearHead {
        weights: raw_weights,
        bias: raw_bias,
        input_kind: kind,
    })
}

/// Scores every row and takes the argmax class, breaking ties toward the
/// lowest index.
pub fn predict(head: &LinearHead, inputs: &ArrayView2<f64>) -> Result<(Array2<f64>, LabelVector)> {
    if inputs.ncols() != head.input_dim() {
        return Err(Error::Dimension(format!(
            "head expects {} inputs, got {}",
            head.input_dim(),
            inputs.ncols()
        )));
    }
    let scores = inputs.dot(&head.weights.t()) + &head.bias;
    let mut classes = Vec::with_capacity(inputs.nrows());
    for row in scores.rows() {
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        classes.push(best as u8);
    }
    let labels = LabelVector::new(classes, head.classes() as u32)?;
    Ok((scores, labels))
}

/// Kappa of the head's predictions against the given labels.
pub fn evaluate(head: &LinearHead, inputs: &ArrayView2<f64>, labels: &LabelVector) -> Result<f64> {
    let (_, predictions) = predict(head, inputs)?;
    let conf = metrics::confusion(labels, &predictions)?;
    metrics::qwk(&conf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn blobs_2class(n_per: usize, seed: u64) -> (Array2<f64>, LabelVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per;
        let mut x = Array2::<f64>::zeros((n, 3));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            let center = if class == 0 { -4.0 } else { 4.0 };
            for j in 0..3 {
                let g: f64 = StandardNormal.sample(&mut rng);
                x[[i, j]] = center + g * 0.5 * (j as f64 + 1.0);
            }
            y.push(class);
        }
        (x, LabelVector::new(y, 2).unwrap())
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let (x, y) = blobs_2class(100, 1);
        let head = fit_head(&x.view(), &y, InputKind::Features, &FitConfig::default()).unwrap();
        let (_, preds) = predict(&head, &x.view()).unwrap();
        let conf = metrics::confusion(&y, &preds).unwrap();
        assert!(metrics::accuracy(&conf) >= 0.99);
    }

    #[test]
    fn all_zero_inputs_predict_majority_class() {
        let x = Array2::<f64>::zeros((8, 4));
        let y = LabelVector::new(vec![0, 1, 1, 1, 1, 1, 0, 1], 2).unwrap();
        let head = fit_head(&x.view(), &y, InputKind::Features, &FitConfig::default()).unwrap();
        let (_, preds) = predict(&head, &x.view()).unwrap();
        assert!(preds.values().iter().all(|&p| p == 1));
    }

    #[test]
    fn same_seed_reproduces_identical_head() {
        let (x, y) = blobs_2class(50, 2);
        let cfg = FitConfig {
            seed: 7,
            epochs: 50,
            ..FitConfig::default()
        };
        let a = fit_head(&x.view(), &y, InputKind::Features, &cfg).unwrap();
        let b = fit_head(&x.view(), &y, InputKind::Features, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn absent_class_is_named() {
        let x = Array2::<f64>::zeros((6, 2));
        let y = LabelVector::new(vec![0, 0, 2, 2, 0, 2], 3).unwrap();
        let err = fit_head(&x.view(), &y, InputKind::Features, &FitConfig::default()).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn bias_only_argmax() {
        let head = LinearHead {
            weights: Array2::zeros((3, 2)),
            bias: ndarray::arr1(&[0.0, 1.0, 0.0]),
            input_kind: InputKind::Features,
        };
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i + j) as f64);
        let (_, preds) = predict(&head, &x.view()).unwrap();
        assert!(preds.values().iter().all(|&p| p == 1));
    }

    #[test]
    fn one_hot_identity() {
        let head = LinearHead {
            weights: Array2::eye(4),
            bias: Array1::zeros(4),
            input_kind: InputKind::Features,
        };
        let x = Array2::eye(4);
        let (_, preds) = predict(&head, &x.view()).unwrap();
        assert_eq!(preds.values(), &[0, 1, 2, 3]);
    }

    #[test]
    fn argmax_matches_row_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let head = LinearHead {
            weights: Array2::from_shape_fn((5, 7), |_| rng.random_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0)),
            input_kind: InputKind::Features,
        };
        let x = Array2::from_shape_fn((40, 7), |_| rng.random_range(-2.0..2.0));
        let (scores, preds) = predict(&head, &x.view()).unwrap();
        for i in 0..40 {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for j in 0..5 {
                if scores[[i, j]] > best_v {
                    best_v = scores[[i, j]];
                    best = j;
                }
            }
            assert_eq!(preds.values()[i], best as u8);
        }
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let y = LabelVector::new(vec![0, 1, 2, 1, 0, 2, 2], 3).unwrap();
        // a head that reads the label straight off a one-hot input
        let head = LinearHead {
            weights: Array2::eye(3),
            bias: Array1::zeros(3),
            input_kind: InputKind::Features,
        };
        let mut x = Array2::<f64>::zeros((7, 3));
        for (i, &label) in y.values().iter().enumerate() {
            x[[i, label as usize]] = 1.0;
        }
        assert_abs_diff_eq!(
            evaluate(&head, &x.view(), &y).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let y = LabelVector::new(vec![0, 1, 0, 1], 2).unwrap();
        let head = LinearHead {
            weights: Array2::zeros((2, 2)),
            bias: ndarray::arr1(&[1.0, 0.0]),
            input_kind: InputKind::Features,
        };
        let x = Array2::<f64>::zeros((4, 2));
        // constant-but-not-equal raters: defined and no better than chance
        let kappa = evaluate(&head, &x.view(), &y).unwrap();
        assert!(kappa <= 0.0);
    }

    #[test]
    fn separable_data_without_l2_drives_loss_down() {
        let (x, y) = blobs_2class(60, 3);
        let cfg = FitConfig {
            epochs: 120,
            l2: 0.0,
            ..FitConfig::default()
        };
        let head = fit_head(&x.view(), &y, InputKind::Features, &cfg).unwrap();
        let probs = softmax_rows(&(x.dot(&head.weights.t()) + &head.bias));
        let loss = cross_entropy(&probs, y.values(), 0.0, &head.weights);
        assert!(loss < 0.1, "final loss {loss}");
    }

    #[test]
    fn planted_baseline_kappa() {
        use crate::synthetic::{plant_dataset, SourceDistribution, SourceSpec};
        let spec = SourceSpec::new(
            vec![
                SourceDistribution::Laplace,
                SourceDistribution::Laplace,
                SourceDistribution::Uniform,
            ],
            71,
        )
        .unwrap();
        let ds = plant_dataset(&spec, 3_000, 16, 0.05, 5, 71).unwrap();
        let train = ds.subset(0, 2_000).unwrap();
        let val = ds.subset(2_000, 3_000).unwrap();
        let cfg = FitConfig {
            seed: 71,
            ..FitConfig::default()
        };
        let fitted = fit_head(
            &train.features.to_f64().view(),
            &train.labels,
            InputKind::Features,
            &cfg,
        )
        .unwrap();
        let kappa = evaluate(&fitted, &val.features.to_f64().view(), &val.labels).unwrap();
        assert!((0.6..=1.0).contains(&kappa), "baseline kappa {kappa}");
        // regression fixture: measured once on this seed and frozen
        assert_abs_diff_eq!(kappa, 0.949749, epsilon = 1e-6);
    }

    #[test]
    fn more_epochs_never_raise_the_loss() {
        let (x, y) = blobs_2class(60, 4);
        let loss_after = |epochs: usize| -> f64 {
            let cfg = FitConfig {
                epochs,
                seed: 4,
                l2: 0.0,
                ..FitConfig::default()
            };
            let head = fit_head(&x.view(), &y, InputKind::Features, &cfg).unwrap();
            let probs = softmax_rows(&(x.dot(&head.weights.t()) + &head.bias));
            cross_entropy(&probs, y.values(), 0.0, &head.weights)
        };
        let mut previous = f64::INFINITY;
        for epochs in [5, 20, 60, 120] {
            let loss = loss_after(epochs);
            assert!(
                loss <= previous + 1e-12,
                "loss rose from {previous} to {loss} at {epochs} epochs"
            );
            previous = loss;
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = Array2::<f64>::zeros((2, 2));
        let y = LabelVector::new(vec![0, 1], 3).unwrap();
        assert!(fit_head(&x.view(), &y, InputKind::Features, &FitConfig::default()).is_err());
    }

    proptest! {
        // adding a constant to every score row never changes the argmax
        #[test]
        fn argmax_is_shift_invariant(
            scores in proptest::collection::vec(-10.0f64..10.0, 12),
            shift in -100.0f64..100.0,
        ) {
            let base = Array2::from_shape_vec((3, 4), scores).unwrap();
            let shifted = &base + shift;
            let argmax = |m: &Array2<f64>| -> Vec<usize> {
                m.rows().into_iter().map(|r| {
                    let mut best = 0;
                    for (j, &v) in r.iter().enumerate() {
                        if v > r[best] { best = j; }
                    }
                    best
                }).collect()
            };
            prop_assert_eq!(argmax(&base), argmax(&shifted));
        }

        // predictions are equivariant under row permutation
        #[test]
        fn predict_is_row_permutation_equivariant(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head = LinearHead {
                weights: Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0)),
                bias: Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0)),
                input_kind: InputKind::Features,
            };
            let x = Array2::from_shape_fn((10, 4), |_| rng.random_range(-2.0..2.0));
            let (_, direct) = predict(&head, &x.view()).unwrap();
            let mut reversed = Array2::zeros((10, 4));
            for i in 0..10 {
                reversed.row_mut(i).assign(&x.row(9 - i));
            }
            let (_, rev) = predict(&head, &reversed.view()).unwrap();
            let direct_rev: Vec<u8> = direct.values().iter().rev().cloned().collect();
            prop_assert_eq!(rev.values(), &direct_rev[..]);
        }
    }
}
