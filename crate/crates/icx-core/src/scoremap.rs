//! Explanation generation: per-component score decompositions, spatial
//! component maps with threshold masks, receptive-field geometry, the
//! projection of hidden-cell scores into input space, and heatmap
//! rendering.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::formats::SpatialFeatureMap;
use crate::head::{InputKind, LinearHead};
use crate::ica::IcModel;

// ---------------------------------------------------------------------------
// score decomposition
// ---------------------------------------------------------------------------

/// Exact decomposition of class scores into per-component contributions:
/// `values[k][j] + ... + bias[k] = scores[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionTable {
    /// K x n: contribution of component j to the score of class k.
    pub values: Array2<f64>,
    pub bias: Array1<f64>,
    pub scores: Array1<f64>,
}

impl ContributionTable {
    /// Fixed-width text table, one row per class.
    pub fn to_text(&self) -> String {
        let n = self.values.ncols();
        let mut out = String::from("class");
        for j in 0..n {
            out.push_str(&format!("  {:>15}", format!("ic{j}")));
        }
        out.push_str(&format!("  {:>15}  {:>15}\n", "bias", "score"));
        for k in 0..self.values.nrows() {
            out.push_str(&format!("{k:>5}"));
            for j in 0..n {
                out.push_str(&format!("  {:>15.6e}", self.values[[k, j]]));
            }
            out.push_str(&format!(
                "  {:>15.6e}  {:>15.6e}\n",
                self.bias[k], self.scores[k]
            ));
        }
        out
    }
}

/// Splits the class scores of one component vector `s` into per-component
/// terms: `values[k][j] = weights[k][j] * s[j]`.
pub fn component_contributions(
    head: &LinearHead,
    s: &ArrayView1<f64>,
) -> Result<ContributionTable> {
    if head.input_kind != InputKind::IndependentComponents {
        return Err(Error::Validation(
            "contribution table needs a head fitted on independent components".into(),
        ));
    }
    if s.len() != head.input_dim() {
        return Err(Error::Dimension(format!(
            "head expects {} components, got {}",
            head.input_dim(),
            s.len()
        )));
    }
    let k = head.classes();
    let n = head.input_dim();
    let mut values = Array2::<f64>::zeros((k, n));
    for c in 0..k {
        for j in 0..n {
            values[[c, j]] = head.weights[[c, j]] * s[j];
        }
    }
    let scores = head.weights.dot(s) + &head.bias;
    Ok(ContributionTable {
        values,
        bias: head.bias.clone(),
        scores,
    })
}

// ---------------------------------------------------------------------------
// spatial component maps
// ---------------------------------------------------------------------------

/// Threshold population for the `< -2 sigma` mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// Standard deviation of the image's own grid (self-contained default).
    PerImage,
    /// A caller-supplied population value, e.g. calibrated over a dataset.
    Global(f64),
}

/// One component's spatial score map over a feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialScoreMap {
    pub component: usize,
    /// H x W per-cell component values.
    pub grid: Array2<f64>,
    pub sigma: f64,
    /// Cells with `grid < -2 sigma`; empty when sigma is zero.
    pub mask: Array2<bool>,
}

impl SpatialScoreMap {
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Evaluates component `j` at every grid cell of one image:
/// `grid[y][x] = unmixing_row_j . (cell - center)`.
///
/// By linearity the grid mean equals the component value of the pooled
/// feature vector.
pub fn spatial_ic_map(
    model: &IcModel,
    fmap: &SpatialFeatureMap,
    image: usize,
    component: usize,
    sigma_mode: SigmaMode,
) -> Result<SpatialScoreMap> {
    if fmap.channels() != model.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature map has {} channels, model expects {}",
            fmap.channels(),
            model.feature_dim()
        )));
    }
    if image >= fmap.images() {
        return Err(Error::Validation(format!(
            "image {image} out of range ({} images)",
            fmap.images()
        )));
    }
    if component >= model.n_components {
        return Err(Error::Validation(format!(
            "component {component} out of range ({} components)",
            model.n_components
        )));
    }
    let (h, w, m) = (fmap.height(), fmap.width(), fmap.channels());
    let row = model.unmixing.row(component);
    let offset: f64 = row
        .iter()
        .zip(model.center.iter())
        .map(|(&r, &c)| r * c)
        .sum();

    let mut grid = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut v = -offset;
            for c in 0..m {
                v += row[c] * f64::from(fmap.at(image, y, x, c));
            }
            grid[[y, x]] = v;
        }
    }

    let sigma = match sigma_mode {
        SigmaMode::PerImage => {
            let cells = (h * w) as f64;
            let mean = grid.sum() / cells;
            (grid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cells).sqrt()
        }
        SigmaMode::Global(v) => {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("bad global sigma {v}")));
            }
            v
        }
    };

    let mask = if sigma > 0.0 {
        grid.mapv(|v| v < -2.0 * sigma)
    } else {
        Array2::from_elem((h, w), false)
    };

    Ok(SpatialScoreMap {
        component,
        grid,
        sigma,
        mask,
    })
}

// ---------------------------------------------------------------------------
// receptive field geometry
// ---------------------------------------------------------------------------

/// One convolution or pooling layer, square kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            kernel,
            stride,
            padding,
        }
    }
}

/// Receptive field of one layer's outputs in input coordinates: cell `u`
/// covers input pixels `[u * jump + left, u * jump + left + size - 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerField {
    pub size: usize,
    pub jump: usize,
    pub left: i64,
    /// Center offset of cell 0 in input pixels.
    pub center: f64,
}

/// Receptive-field geometry of a layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptiveFieldSpec {
    pub layers: Vec<LayerSpec>,
    /// Field after each layer, same order as `layers`.
    pub fields: Vec<LayerField>,
}

impl ReceptiveFieldSpec {
    /// Field of the final layer (the identity field for an empty stack).
    pub fn final_field(&self) -> LayerField {
        *self.fields.last().unwrap_or(&LayerField {
            size: 1,
            jump: 1,
            left: 0,
            center: 0.0,
        })
    }

    /// Spatial output size of the stack for the given input size.
    pub fn output_size(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        let mut h = input.0 as i64;
        let mut w = input.1 as i64;
        for (i, layer) in self.layers.iter().enumerate() {
            let k = layer.kernel as i64;
            let s = layer.stride as i64;
            let p = layer.padding as i64;
            h = (h + 2 * p - k).div_euclid(s) + 1;
            w = (w + 2 * p - k).div_euclid(s) + 1;
            if h <= 0 || w <= 0 {
                return Err(Error::Validation(format!(
                    "layer {i} consumes the whole input ({h}x{w} left)"
                )));
            }
        }
        Ok((h as usize, w as usize))
    }
}

/// Tracks `(size, jump, left)` through the stack with the recursion
/// `size_l = size_{l-1} + (kernel_l - 1) * jump_{l-1}`,
/// `jump_l = jump_{l-1} * stride_l`,
/// `left_l = left_{l-1} - padding_l * jump_{l-1}`.
pub fn receptive_field(layers: &[LayerSpec]) -> Result<ReceptiveFieldSpec> {
    let mut fields = Vec::with_capacity(layers.len());
    let mut size = 1usize;
    let mut jump = 1usize;
    let mut left = 0i64;
    for (i, layer) in layers.iter().enumerate() {
        if layer.kernel == 0 || layer.stride == 0 {
            return Err(Error::Validation(format!(
                "layer {i} needs positive kernel and stride"
            )));
        }
        size += (layer.kernel - 1) * jump;
        left -= (layer.padding * jump) as i64;
        jump *= layer.stride;
        fields.push(LayerField {
            size,
            jump,
            left,
            center: left as f64 + (size as f64 - 1.0) / 2.0,
        });
    }
    Ok(ReceptiveFieldSpec {
        layers: layers.to_vec(),
        fields,
    })
}

// ---------------------------------------------------------------------------
// input-space projection
// ---------------------------------------------------------------------------

/// Distributes every masked hidden cell's score uniformly over its
/// (border-clipped) receptive-field rectangle; overlaps sum. The total of
/// the output equals the total of the masked scores.
pub fn project_to_input_raw(
    map: &SpatialScoreMap,
    rf: &ReceptiveFieldSpec,
    input: (usize, usize),
) -> Result<Array2<f64>> {
    let expected = rf.output_size(input)?;
    let got = (map.grid.nrows(), map.grid.ncols());
    if expected != got {
        return Err(Error::Dimension(format!(
            "grid is {}x{} but the stack maps a {}x{} input to {}x{}",
            got.0, got.1, input.0, input.1, expected.0, expected.1
        )));
    }
    let field = rf.final_field();
    let (h, w) = input;
    let mut out = Array2::<f64>::zeros((h, w));
    for gy in 0..got.0 {
        for gx in 0..got.1 {
            if !map.mask[[gy, gx]] {
                continue;
            }
            let score = map.grid[[gy, gx]];
            let y0 = ((gy * field.jump) as i64 + field.left).max(0) as usize;
            let y1 = (((gy * field.jump) as i64 + field.left + field.size as i64 - 1)
                .min(h as i64 - 1)) as usize;
            let x0 = ((gx * field.jump) as i64 + field.left).max(0) as usize;
            let x1 = (((gx * field.jump) as i64 + field.left + field.size as i64 - 1)
                .min(w as i64 - 1)) as usize;
            let area = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            let share = score / area;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    out[[y, x]] += share;
                }
            }
        }
    }
    Ok(out)
}

/// [`project_to_input_raw`] normalized to `[-1, 0]` by the most negative
/// value (a zero map stays zero).
pub fn project_to_input(
    map: &SpatialScoreMap,
    rf: &ReceptiveFieldSpec,
    input: (usize, usize),
) -> Result<Array2<f64>> {
    let mut out = project_to_input_raw(map, rf, input)?;
    let min = out.iter().cloned().fold(0.0_f64, f64::min);
    if min < 0.0 {
        out.mapv_inplace(|v| v / -min);
    }
    Ok(out)
}

/// Normalizes the negative-thresholded grid itself to `[-1, 0]`: the
/// grid-resolution analogue of [`project_to_input`] for models without a
/// known convolution stack.
pub fn masked_grid_map(map: &SpatialScoreMap) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(map.grid.raw_dim());
    for ((idx, &masked), &v) in map.mask.indexed_iter().zip(map.grid.iter()) {
        if masked {
            out[idx] = v;
        }
    }
    let min = out.iter().cloned().fold(0.0_f64, f64::min);
    if min < 0.0 {
        out.mapv_inplace(|v| v / -min);
    }
    out
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

/// Renders a normalized map. Without a background: 8-bit binary PGM (`P5`,
/// maxval 255) with `round(255 * |v|)` per pixel. With a grayscale
/// background: binary PPM (`P6`) with the red channel saturated where the
/// map is active (negative) and the background in green/blue.
pub fn render_heatmap(
    map: &ArrayView2<f64>,
    background: Option<&Array2<u8>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match background {
        None => heatmap_pgm_bytes(map),
        Some(bg) => heatmap_ppm_bytes(map, bg)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// PGM encoding of a normalized map (exposed for golden tests).
pub fn heatmap_pgm_bytes(map: &ArrayView2<f64>) -> Vec<u8> {
    let (h, w) = (map.nrows(), map.ncols());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w);
    for v in map.iter() {
        out.push((255.0 * v.abs()).round().clamp(0.0, 255.0) as u8);
    }
    out
}

fn heatmap_ppm_bytes(map: &ArrayView2<f64>, background: &Array2<u8>) -> Result<Vec<u8>> {
    let (h, w) = (map.nrows(), map.ncols());
    if background.nrows() != h || background.ncols() != w {
        return Err(Error::Dimension(format!(
            "background is {}x{}, map is {h}x{w}",
            background.nrows(),
            background.ncols()
        )));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * h * w);
    for (v, &bg) in map.iter().zip(background.iter()) {
        if *v < 0.0 {
            out.push(255);
            out.push(bg);
            out.push(bg);
        } else {
            out.push(bg);
            out.push(bg);
            out.push(bg);
        }
    }
    Ok(out)
}
