//! Synthetic datasets with planted independent sources, known mixing, known
//! intrinsic rank and ordinal labels: the ground-truth oracles the test
//! suites rely on.
//!
//! All randomness flows from one 64-bit seed through fixed ChaCha8 streams,
//! one per concern (sources, mixing, noise, labels, bumps), so e.g. the
//! label stream is untouched by how many mixing resamples were needed and
//! labels are invariant to the ambient dimension.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::formats::{FeatureMatrix, LabelVector, SpatialFeatureMap};
use crate::model_file::format_float;

const STREAM_SOURCES: u64 = 1;
const STREAM_MIXING: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_LABELS: u64 = 4;
const STREAM_BUMPS: u64 = 5;

/// Largest mixing condition number accepted before resampling.
const MAX_MIXING_CONDITION: f64 = 10.0;
const MAX_MIXING_RESAMPLES: usize = 100;

/// Gaussian jitter added to the label signal before quantization.
const LABEL_NOISE: f64 = 0.15;

/// Perturbation magnitude (in source units) of a planted spatial bump.
const BUMP_AMPLITUDE: f64 = 5.0;

/// Fresh generator for one named stream: position zero, independent of any
/// draws made on other streams.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Source distribution of one planted component. All are standardized to
/// zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceDistribution {
    Laplace,
    Uniform,
    Gaussian,
}

impl fmt::Display for SourceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceDistribution::Laplace => "laplace",
            SourceDistribution::Uniform => "uniform",
            SourceDistribution::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SourceDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(SourceDistribution::Laplace),
            "uniform" => Ok(SourceDistribution::Uniform),
            "gaussian" => Ok(SourceDistribution::Gaussian),
            other => Err(Error::Validation(format!(
                "unknown source distribution '{other}'"
            ))),
        }
    }
}

/// Declaration of the planted sources.
///
/// At most one source may be Gaussian: with two or more, the independent
/// components are not identifiable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    pub distributions: Vec<SourceDistribution>,
    pub seed: u64,
}

impl SourceSpec {
    pub fn new(distributions: Vec<SourceDistribution>, seed: u64) -> Result<Self> {
        if distributions.is_empty() {
            return Err(Error::Validation("at least one source required".into()));
        }
        let gaussians = distributions
            .iter()
            .filter(|&&d| d == SourceDistribution::Gaussian)
            .count();
        if gaussians > 1 {
            return Err(Error::Validation(format!(
                "at most one gaussian source is identifiable, got {gaussians}"
            )));
        }
        Ok(SourceSpec {
            distributions,
            seed,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.distributions.len()
    }
}

/// Dataset with planted ground truth.
#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    /// N x n matrix of the planted source values.
    pub true_sources: Array2<f64>,
    /// m x n mixing with unit-norm columns and condition number <= 10.
    pub mixing: Array2<f64>,
    pub noise_sigma: f64,
    /// Unit direction over sources that drives the ordinal labels; every
    /// coordinate is bounded away from zero so each source stays
    /// informative.
    pub label_direction: Array1<f64>,
    pub spec: SourceSpec,
    pub seed: u64,
}

impl PlantedDataset {
    pub fn n_sources(&self) -> usize {
        self.mixing.ncols()
    }

    /// Dataset restricted to the given half-open row range; mixing, label
    /// direction and seed are shared with the parent.
    pub fn subset(&self, start: usize, end: usize) -> Result<PlantedDataset> {
        let features = self.features.slice_rows(start, end)?;
        let labels = self.labels.slice(start, end)?;
        let true_sources = self
            .true_sources
            .slice(ndarray::s![start..end, ..])
            .to_owned();
        Ok(PlantedDataset {
            features,
            labels,
            true_sources,
            mixing: self.mixing.clone(),
            noise_sigma: self.noise_sigma,
            label_direction: self.label_direction.clone(),
            spec: self.spec.clone(),
            seed: self.seed,
        })
    }
}

fn sample_source(dist: SourceDistribution, rng: &mut ChaCha8Rng) -> f64 {
    match dist {
        SourceDistribution::Laplace => {
            // inverse CDF with scale 1/sqrt(2) for unit variance
            let u: f64 = rng.random::<f64>() - 0.5;
            let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
            -u.signum() * t.ln() / std::f64::consts::SQRT_2
        }
        SourceDistribution::Uniform => {
            // half-width sqrt(3) for unit variance
            let limit = 3.0_f64.sqrt();
            rng.random_range(-limit..limit)
        }
        SourceDistribution::Gaussian => StandardNormal.sample(rng),
    }
}

fn gen_sources_with_rng(
    spec: &SourceSpec,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be at least 1".into()));
    }
    let n = spec.n_sources();
    let mut sources = Array2::<f64>::zeros((n_samples, n));
    for (j, &dist) in spec.distributions.iter().enumerate() {
        for i in 0..n_samples {
            sources[[i, j]] = sample_source(dist, rng);
        }
        // standardize empirically: zero mean, unit sample variance
        let mean = sources.column(j).sum() / n_samples as f64;
        if n_samples < 2 {
            sources.column_mut(j).mapv_inplace(|v| v - mean);
            continue;
        }
        let var = sources
            .column(j)
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / (n_samples as f64 - 1.0);
        let std = var.sqrt();
        if std > 0.0 {
            sources.column_mut(j).mapv_inplace(|v| (v - mean) / std);
        } else {
            sources.column_mut(j).mapv_inplace(|v| v - mean);
        }
    }
    Ok(sources)
}

/// Draws standardized i.i.d. source columns, deterministic per `spec.seed`.
pub fn gen_sources(spec: &SourceSpec, n_samples: usize) -> Result<Array2<f64>> {
    let mut rng = stream_rng(spec.seed, STREAM_SOURCES);
    gen_sources_with_rng(spec, n_samples, &mut rng)
}

/// Minimum share of the label direction along the mixing's weakest source
/// direction. Below it, a lower-dimensional linear summary of the features
/// could capture the labels and the planted source count would be a lie.
const MIN_WEAK_DIRECTION_SHARE: f64 = 0.45;

/// Draws a unit-column mixing with condition number <= 10 whose
/// least-variance source direction keeps at least
/// [`MIN_WEAK_DIRECTION_SHARE`] of the (already fixed) label direction, so
/// that no n-1 dimensional projection of the features captures the labels.
fn draw_mixing(
    m: usize,
    n: usize,
    label_direction: &Array1<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    for _ in 0..MAX_MIXING_RESAMPLES {
        let mut mixing = Array2::<f64>::zeros((m, n));
        for v in mixing.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for mut col in mixing.columns_mut() {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
            }
        }
        let cond = crate::linalg::condition_number(&mixing.view())?;
        if cond > MAX_MIXING_CONDITION {
            continue;
        }
        if n > 1 {
            let gram = mixing.t().dot(&mixing);
            let (_, vecs) = crate::linalg::sym_eigh(&gram.view())?;
            let weakest = vecs.column(n - 1);
            let share: f64 = label_direction
                .iter()
                .zip(weakest.iter())
                .map(|(a, b)| a * b)
                .sum();
            if share.abs() < MIN_WEAK_DIRECTION_SHARE {
                continue;
            }
        }
        return Ok(mixing);
    }
    Err(Error::Generation(format!(
        "no acceptable mixing (condition <= {MAX_MIXING_CONDITION}, weak-axis label share >= {MIN_WEAK_DIRECTION_SHARE}) in {MAX_MIXING_RESAMPLES} draws"
    )))
}

/// Label direction over sources: sign from one draw, magnitude
/// `1 + 0.35|g|` from another, normalized, so every coordinate keeps a
/// non-negligible share of the label signal. Depends only on the source
/// count, never on the ambient embedding.
fn draw_label_direction(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let mut v = Array1::<f64>::zeros(n);
    for j in 0..n {
        let sign_draw: f64 = StandardNormal.sample(rng);
        let mag_draw: f64 = StandardNormal.sample(rng);
        let sign = if sign_draw < 0.0 { -1.0 } else { 1.0 };
        v[j] = sign * (1.0 + 0.35 * mag_draw.abs());
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.mapv_inplace(|x| x / norm);
    v
}

/// Ranks `signal` and splits the ranks into `k` near-equal bins, so every
/// class is populated at any sample count.
fn equal_frequency_labels(signal: &[f64], k: u32) -> Vec<u8> {
    let n = signal.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| signal[a].partial_cmp(&signal[b]).unwrap().then(a.cmp(&b)));
    let mut labels = vec![0u8; n];
    for (rank, &idx) in order.iter().enumerate() {
        labels[idx] = ((rank as u64 * u64::from(k)) / n as u64) as u8;
    }
    labels
}

/// Plants a dataset: independent sources, a well-conditioned mixing into
/// `m` ambient dimensions, Gaussian feature noise, and ordinal labels that
/// depend on the features only through the planted sources.
pub fn plant_dataset(
    spec: &SourceSpec,
    n_samples: usize,
    m: usize,
    noise_sigma: f64,
    k: u32,
    seed: u64,
) -> Result<PlantedDataset> {
    let n = spec.n_sources();
    if m < n {
        return Err(Error::Validation(format!(
            "ambient dimension {m} below source count {n}"
        )));
    }
    if !(2..=256).contains(&k) {
        return Err(Error::Validation(format!(
            "class count {k} outside 2..=256"
        )));
    }
    if n_samples < k as usize {
        return Err(Error::Validation(format!(
            "{n_samples} samples cannot populate {k} classes"
        )));
    }
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::Validation(format!("bad noise sigma {noise_sigma}")));
    }

    let mut source_rng = stream_rng(seed, STREAM_SOURCES);
    let sources = gen_sources_with_rng(spec, n_samples, &mut source_rng)?;

    // the label stream never touches the ambient dimension, so labels are
    // invariant to the embedding
    let mut label_rng = stream_rng(seed, STREAM_LABELS);
    let direction = draw_label_direction(n, &mut label_rng);
    let mut signal = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut t = 0.0;
        for j in 0..n {
            t += direction[j] * sources[[i, j]];
        }
        let jitter: f64 = StandardNormal.sample(&mut label_rng);
        signal.push(t + LABEL_NOISE * jitter);
    }
    let labels = LabelVector::new(equal_frequency_labels(&signal, k), k)?;

    let mut mixing_rng = stream_rng(seed, STREAM_MIXING);
    let mixing = draw_mixing(m, n, &direction, &mut mixing_rng)?;

    let mut rng = stream_rng(seed, STREAM_NOISE);
    let mut x = sources.dot(&mixing.t());
    if noise_sigma > 0.0 {
        for v in x.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += noise_sigma * g;
        }
    }
    let features = FeatureMatrix::from_f64(n_samples, m, x.as_slice().unwrap())?;

    Ok(PlantedDataset {
        features,
        labels,
        true_sources: sources,
        mixing,
        noise_sigma,
        label_direction: direction,
        spec: spec.clone(),
        seed,
    })
}

/// Ground-truth position of one planted spatial bump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedBump {
    pub image: usize,
    pub y: usize,
    pub x: usize,
    /// Index of the perturbed source.
    pub source: usize,
}

/// Spatial feature maps with the planted bump ground truth.
#[derive(Debug, Clone)]
pub struct SpatialPlant {
    pub map: SpatialFeatureMap,
    pub bumps: Vec<PlantedBump>,
}

/// Builds one spatial feature tensor per dataset row: a constant background
/// equal to the row's pooled feature vector plus mean-zero, source-aligned
/// bumps at recorded cells. The per-image grid average therefore reproduces
/// the row's feature vector, and each bump perturbs exactly one source in
/// its anomalous direction (the direction that raises the label signal).
///
/// `lesion_density` is bumps per grid cell: every image receives
/// `round(lesion_density * h * w)` bumps at distinct cells.
pub fn plant_spatial(
    dataset: &PlantedDataset,
    h: usize,
    w: usize,
    lesion_density: f64,
) -> Result<SpatialPlant> {
    if h == 0 || w == 0 {
        return Err(Error::Validation("grid dimensions must be positive".into()));
    }
    if !(0.0..=1.0).contains(&lesion_density) {
        return Err(Error::Validation(format!(
            "lesion density {lesion_density} outside [0, 1]"
        )));
    }
    let cells = h * w;
    let bumps_per_image = (lesion_density * cells as f64).round() as usize;
    if bumps_per_image > cells {
        return Err(Error::Validation(format!(
            "{bumps_per_image} bumps do not fit a {h}x{w} grid"
        )));
    }

    let images = dataset.features.rows();
    let m = dataset.features.cols();
    let n = dataset.n_sources();
    let mut rng = stream_rng(dataset.seed, STREAM_BUMPS);

    let mut data = vec![0.0f32; images * cells * m];
    let mut bumps = Vec::new();

    let mut delta = Array2::<f64>::zeros((cells, n));
    for image in 0..images {
        delta.fill(0.0);
        let mut taken = vec![false; cells];
        for _ in 0..bumps_per_image {
            let cell = loop {
                let c = rng.random_range(0..cells);
                if !taken[c] {
                    taken[c] = true;
                    break c;
                }
            };
            let source = rng.random_range(0..n);
            // the sign that raises the label signal
            let dir = if dataset.label_direction[source] < 0.0 {
                -1.0
            } else {
                1.0
            };
            delta[[cell, source]] += dir * BUMP_AMPLITUDE;
            bumps.push(PlantedBump {
                image,
                y: cell / w,
                x: cell % w,
                source,
            });
        }
        // remove the grid mean so pooling reproduces the feature vector
        for j in 0..n {
            let mean = delta.column(j).sum() / cells as f64;
            if mean != 0.0 {
                delta.column_mut(j).mapv_inplace(|v| v - mean);
            }
        }

        let base = dataset.features.row(image);
        for cell in 0..cells {
            for c in 0..m {
                let mut v = f64::from(base[c]);
                for j in 0..n {
                    v += dataset.mixing[[c, j]] * delta[[cell, j]];
                }
                data[(image * cells + cell) * m + c] = v as f32;
            }
        }
    }

    Ok(SpatialPlant {
        map: SpatialFeatureMap::new(images, h, w, m, data)?,
        bumps,
    })
}

/// Permutation- and sign-invariant separation quality of
/// `P = estimated_unmixing * true_mixing`; 0 for a perfect sign/permuted
/// recovery, 1 for a fully mixed product, normalized to `[0, 1]`.
pub fn amari_index(
    estimated_unmixing: &ArrayView2<f64>,
    true_mixing: &ArrayView2<f64>,
) -> Result<f64> {
    if estimated_unmixing.ncols() != true_mixing.nrows() {
        return Err(Error::Dimension(format!(
            "unmixing is {}x{} but mixing is {}x{}",
            estimated_unmixing.nrows(),
            estimated_unmixing.ncols(),
            true_mixing.nrows(),
            true_mixing.ncols()
        )));
    }
    let p = estimated_unmixing.dot(true_mixing);
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::Dimension(format!(
            "product must be square, got {}x{}",
            n,
            p.ncols()
        )));
    }
    if n == 1 {
        return Ok(0.0);
    }

    let abs = p.mapv(f64::abs);
    let mut row_term = 0.0;
    for row in abs.rows() {
        let max = row.iter().cloned().fold(0.0_f64, f64::max);
        if max == 0.0 {
            return Err(Error::Validation("product has an all-zero row".into()));
        }
        row_term += row.sum() / max - 1.0;
    }
    let mut col_term = 0.0;
    for col in abs.columns() {
        let max = col.iter().cloned().fold(0.0_f64, f64::max);
        if max == 0.0 {
            return Err(Error::Validation("product has an all-zero column".into()));
        }
        col_term += col.sum() / max - 1.0;
    }
    let scale = 2.0 * n as f64;
    Ok((row_term / scale + col_term / scale) / (n as f64 - 1.0))
}

/// Writes the ground-truth sidecar: source spec, mixing, label direction
/// and bump positions, in the same line-oriented text style as model files.
pub fn write_ground_truth(
    dataset: &PlantedDataset,
    bumps: Option<&[PlantedBump]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("[truth]\n");
    out.push_str(&format!("seed = {}\n", dataset.seed));
    let dists: Vec<String> = dataset
        .spec
        .distributions
        .iter()
        .map(|d| d.to_string())
        .collect();
    out.push_str(&format!("distributions = {}\n", dists.join(",")));
    out.push_str(&format!(
        "noise_sigma = {}\n",
        format_float(dataset.noise_sigma)
    ));
    let dir: Vec<String> = dataset
        .label_direction
        .iter()
        .map(|&v| format_float(v))
        .collect();
    out.push_str(&format!("label_direction = {}\n", dir.join(",")));
    out.push_str(&format!("mixing.rows = {}\n", dataset.mixing.nrows()));
    out.push_str(&format!("mixing.cols = {}\n", dataset.mixing.ncols()));
    for row in dataset.mixing.rows() {
        let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    if let Some(bumps) = bumps {
        out.push_str(&format!("bump_count = {}\n", bumps.len()));
        for (i, b) in bumps.iter().enumerate() {
            out.push_str(&format!(
                "bump.{i} = {},{},{},{}\n",
                b.image, b.y, b.x, b.source
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
