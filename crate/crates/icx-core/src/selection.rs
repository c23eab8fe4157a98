//! Component-count sweep: find the smallest number of independent
//! components whose linear head matches the full-feature head's validation
//! kappa within a tolerance.

use crate::error::{Error, Result};
use crate::formats::{FeatureMatrix, LabelVector};
use crate::head::{self, FitConfig, InputKind};
use crate::ica::{self, IcModel, IcaConfig};
use crate::seed;

// seed stream tags: 0 full-feature head, 100+n per-n component fit,
// 200+n per-n head fit
const TAG_FULL_HEAD: u64 = 0;
const TAG_ICA_BASE: u64 = 100;
const TAG_HEAD_BASE: u64 = 200;

/// One sweep entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEntry {
    pub n: usize,
    pub kappa: f64,
    pub converged: bool,
}

/// Outcome of [`select_components`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    /// Validation kappa of the head fitted on the full feature space.
    pub kappa_full: f64,
    /// Per-component-count results, ascending in `n`.
    pub per_n: Vec<SelectionEntry>,
    pub chosen_n: usize,
    pub epsilon: f64,
    /// False when no swept `n` came within `epsilon`; `chosen_n` is then the
    /// argmax kappa instead of the minimal satisfying count.
    pub satisfied: bool,
}

/// Everything a sweep needs besides the data: template configurations and
/// the master seed every per-stage seed derives from.
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    /// Template for the per-n component fits; `n_components` and `seed` are
    /// overridden for each swept n.
    pub ica: IcaConfig,
    /// Template for the head fits; `seed` is overridden per fit.
    pub head: FitConfig,
    pub master_seed: u64,
}

impl SelectionConfig {
    pub fn new(master_seed: u64) -> Self {
        SelectionConfig {
            ica: IcaConfig::new(1),
            head: FitConfig::default(),
            master_seed,
        }
    }
}

fn check_class_coverage(labels: &LabelVector, what: &str) -> Result<()> {
    let k = labels.classes() as usize;
    let mut seen = vec![false; k];
    for &y in labels.values() {
        seen[y as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Validation(format!(
            "{what} labels do not cover class {missing}"
        )));
    }
    Ok(())
}

/// Sweeps `n` over `n_min..=n_max`: fits the components on the training
/// set, a linear head on the transformed training set, and evaluates kappa
/// on the validation set. The chosen `n` is the smallest whose kappa is
/// within `epsilon` of the full-feature head's.
///
/// Components are refitted per `n` rather than truncated from one large
/// fit: fixed-point components are not nested. Every seed derives from
/// `cfg.master_seed`, so the report is reproducible bit for bit.
///
/// Returns the report together with the fitted model of the chosen `n`.
pub fn select_components(
    train_features: &FeatureMatrix,
    train_labels: &LabelVector,
    val_features: &FeatureMatrix,
    val_labels: &LabelVector,
    n_range: (usize, usize),
    epsilon: f64,
    cfg: &SelectionConfig,
) -> Result<(SelectionReport, IcModel)> {
    let (n_min, n_max) = n_range;
    if n_min == 0 || n_min > n_max {
        return Err(Error::Validation(format!(
            "bad component range {n_min}..={n_max}"
        )));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Validation(format!("bad epsilon {epsilon}")));
    }
    check_class_coverage(val_labels, "validation")?;
    check_class_coverage(train_labels, "training")?;

    let train_x = train_features.to_f64();
    let val_x = val_features.to_f64();

    let mut full_head_cfg = cfg.head.clone();
    full_head_cfg.seed = seed::derive(cfg.master_seed, TAG_FULL_HEAD);
    let full_head = head::fit_head(
        &train_x.view(),
        train_labels,
        InputKind::Features,
        &full_head_cfg,
    )?;
    let kappa_full = head::evaluate(&full_head, &val_x.view(), val_labels)?;

    let mut per_n = Vec::new();
    let mut models: Vec<IcModel> = Vec::new();
    for n in n_min..=n_max {
        let mut ica_cfg = cfg.ica.clone();
        ica_cfg.n_components = n;
        ica_cfg.seed = seed::derive(cfg.master_seed, TAG_ICA_BASE + n as u64);
        let model = ica::fit_ica(train_features, &ica_cfg)?;

        let train_s = ica::transform_array(&model, &train_x.view())?;
        let val_s = ica::transform_array(&model, &val_x.view())?;

        let mut head_cfg = cfg.head.clone();
        head_cfg.seed = seed::derive(cfg.master_seed, TAG_HEAD_BASE + n as u64);
        let ic_head = head::fit_head(
            &train_s.view(),
            train_labels,
            InputKind::IndependentComponents,
            &head_cfg,
        )?;
        let kappa = head::evaluate(&ic_head, &val_s.view(), val_labels)?;

        per_n.push(SelectionEntry {
            n,
            kappa,
            converged: model.converged,
        });
        models.push(model);
    }

    let chosen_idx = per_n.iter().position(|e| kappa_full - e.kappa <= epsilon);
    let satisfied = chosen_idx.is_some();
    let chosen_idx = chosen_idx.unwrap_or_else(|| {
        let mut best = 0;
        for (i, e) in per_n.iter().enumerate() {
            if e.kappa > per_n[best].kappa {
                best = i;
            }
        }
        best
    });

    let report = SelectionReport {
        kappa_full,
        chosen_n: per_n[chosen_idx].n,
        per_n,
        epsilon,
        satisfied,
    };
    Ok((report, models.swap_remove(chosen_idx)))
}

/// Fixed-width table rendering of a report, stable for golden-file tests.
pub fn report_to_text(report: &SelectionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "kappa_full = {:.6}  epsilon = {:.6}",
        report.kappa_full, report.epsilon
    ));
    if !report.satisfied {
        out.push_str("  (no n satisfied)");
    }
    out.push('\n');
    out.push_str("   n    kappa_n      delta  converged  chosen\n");
    for e in &report.per_n {
        let delta = report.kappa_full - e.kappa;
        let converged = if e.converged { "yes" } else { "no" };
        let chosen = if e.n == report.chosen_n { "*" } else { "-" };
        out.push_str(&format!(
            "{:>4}  {:>9.6}  {:>9.6}  {:>9}  {:>6}\n",
            e.n, e.kappa, delta, converged, chosen
        ));
    }
    out
}
