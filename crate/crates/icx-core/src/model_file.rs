//! Line-oriented text format for fitted models, and the generic
//! section/key-value parser behind it (also used for pipeline config
//! files).
//!
//! A model file holds named sections in a fixed order — `[meta]`, `[pca]`,
//! `[ica]`, `[head]` — each a sequence of `key = value` scalar lines and
//! matrix blocks. A matrix block is `name.rows = R` and `name.cols = C`
//! followed by `R` lines of `C` comma-separated floats. Floats are printed
//! with 9 significant digits (`{:.8e}`), keys in a fixed order, so identical
//! models serialize byte-identically and write-read-write is the identity
//! on bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::head::{InputKind, LinearHead};
use crate::ica::{IcModel, Normalization};
use crate::pca::PcaModel;

/// Canonical float rendering: 9 significant digits, scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn parse_float(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("bad float '{s}'")))
}

// ---------------------------------------------------------------------------
// generic section reader/writer
// ---------------------------------------------------------------------------

/// One parsed section: scalars and matrices, with declaration order kept.
#[derive(Debug, Clone, Default)]
pub struct Section {
    pub name: String,
    pub scalars: Vec<(String, String)>,
    pub matrices: Vec<(String, Array2<f64>)>,
}

impl Section {
    pub fn scalar(&self, key: &str) -> Option<&str> {
        self.scalars
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_scalar(&self, key: &str) -> Result<&str> {
        self.scalar(key)
            .ok_or_else(|| Error::Format(format!("section [{}] is missing key '{key}'", self.name)))
    }

    pub fn matrix(&self, key: &str) -> Option<&Array2<f64>> {
        self.matrices.iter().find(|(k, _)| k == key).map(|(_, m)| m)
    }

    pub fn require_matrix(&self, key: &str) -> Result<&Array2<f64>> {
        self.matrix(key).ok_or_else(|| {
            Error::Format(format!("section [{}] is missing matrix '{key}'", self.name))
        })
    }
}

/// Parses section/key-value text. `line_no` in errors is 1-based.
pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((line_no, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            sections.push(Section {
                name: name.to_string(),
                ..Section::default()
            });
            continue;
        }
        let section = sections.last_mut().ok_or_else(|| {
            Error::Format(format!("line {}: entry before any section", line_no + 1))
        })?;
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("line {}: expected 'key = value'", line_no + 1))
        })?;
        let key = key.trim();
        let value = value.trim();

        if let Some(base) = key.strip_suffix(".rows") {
            let rows: usize = value
                .parse()
                .map_err(|_| Error::Format(format!("bad row count '{value}' for '{base}'")))?;
            let (_, cols_line) = lines
                .next()
                .ok_or_else(|| Error::Format(format!("matrix '{base}' missing cols line")))?;
            let cols: usize = cols_line
                .trim()
                .strip_prefix(&format!("{base}.cols"))
                .and_then(|rest| rest.trim().strip_prefix('='))
                .map(str::trim)
                .ok_or_else(|| {
                    Error::Format(format!("matrix '{base}' expects a '{base}.cols' line"))
                })?
                .parse()
                .map_err(|_| Error::Format(format!("bad col count for '{base}'")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let (data_no, data_line) = lines.next().ok_or_else(|| {
                    Error::Format(format!(
                        "matrix '{base}' declared {rows} rows but data ends after {r}"
                    ))
                })?;
                let cells: Vec<&str> = data_line.trim().split(',').collect();
                if cells.len() != cols {
                    return Err(Error::Format(format!(
                        "line {}: matrix '{base}' row {r} has {} values, expected {cols}",
                        data_no + 1,
                        cells.len()
                    )));
                }
                for cell in cells {
                    data.push(parse_float(cell)?);
                }
            }
            let matrix = Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Format(format!("matrix '{base}': {e}")))?;
            section.matrices.push((base.to_string(), matrix));
        } else {
            section.scalars.push((key.to_string(), value.to_string()));
        }
    }
    Ok(sections)
}

/// Incremental writer that renders sections in call order.
#[derive(Debug, Default)]
pub struct SectionWriter {
    out: String,
}

impl SectionWriter {
    pub fn new() -> Self {
        SectionWriter::default()
    }

    pub fn section(&mut self, name: &str) {
        let _ = writeln!(self.out, "[{name}]");
    }

    pub fn scalar(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.out, "{key} = {value}");
    }

    pub fn float(&mut self, key: &str, value: f64) {
        let _ = writeln!(self.out, "{key} = {}", format_float(value));
    }

    pub fn matrix(&mut self, key: &str, m: &Array2<f64>) {
        let _ = writeln!(self.out, "{key}.rows = {}", m.nrows());
        let _ = writeln!(self.out, "{key}.cols = {}", m.ncols());
        for row in m.rows() {
            let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
            let _ = writeln!(self.out, "{}", cells.join(","));
        }
    }

    pub fn row_vector(&mut self, key: &str, v: &Array1<f64>) {
        let m = Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector");
        self.matrix(key, &m);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

// ---------------------------------------------------------------------------
// typed model file
// ---------------------------------------------------------------------------

/// A fitted model on disk: any combination of the three parts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelFile {
    pub pca: Option<PcaModel>,
    pub ica: Option<IcModel>,
    pub head: Option<LinearHead>,
}

fn row_vector_of(section: &Section, key: &str) -> Result<Array1<f64>> {
    let m = section.require_matrix(key)?;
    if m.nrows() != 1 {
        return Err(Error::Format(format!(
            "'{key}' must be a 1-row vector, got {} rows",
            m.nrows()
        )));
    }
    Ok(m.row(0).to_owned())
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut w = SectionWriter::new();
        w.section("meta");
        w.scalar("format_version", 1);

        if let Some(pca) = &self.pca {
            w.section("pca");
            w.row_vector("mean", &pca.mean);
            w.matrix("components", &pca.components);
            w.row_vector("eigenvalues", &pca.eigenvalues);
        }

        if let Some(ica) = &self.ica {
            w.section("ica");
            w.scalar("n_components", ica.n_components);
            w.scalar("converged", ica.converged);
            w.scalar("gaussian_warning", ica.gaussian_warning);
            let norm = match ica.normalization {
                Normalization::None => "none",
                Normalization::ClassZeroMean => "class0_mean",
                Normalization::PositiveSkew => "positive_skew",
            };
            w.scalar("normalization", norm);
            let order: Vec<String> = ica.component_order.iter().map(|v| v.to_string()).collect();
            w.scalar("component_order", order.join(","));
            let signs: Vec<String> = ica.component_signs.iter().map(|v| v.to_string()).collect();
            w.scalar("component_signs", signs.join(","));
            w.row_vector("center", &ica.center);
            w.matrix("whitening", &ica.whitening);
            w.matrix("rotation", &ica.rotation);
        }

        if let Some(head) = &self.head {
            w.section("head");
            let kind = match head.input_kind {
                InputKind::Features => "features",
                InputKind::IndependentComponents => "independent_components",
            };
            w.scalar("input_kind", kind);
            w.scalar("classes", head.classes());
            w.matrix("weights", &head.weights);
            w.row_vector("bias", &head.bias);
        }

        w.finish()
    }

    pub fn from_text(text: &str) -> Result<ModelFile> {
        let sections = parse_sections(text)?;
        let mut by_name: BTreeMap<&str, &Section> = BTreeMap::new();
        for s in &sections {
            match s.name.as_str() {
                "meta" | "pca" | "ica" | "head" => {
                    if by_name.insert(s.name.as_str(), s).is_some() {
                        return Err(Error::Format(format!("duplicate section [{}]", s.name)));
                    }
                }
                other => {
                    return Err(Error::Format(format!("unknown section [{other}]")));
                }
            }
        }
        let meta = by_name
            .get("meta")
            .ok_or_else(|| Error::Format("missing [meta] section".into()))?;
        let version = meta.require_scalar("format_version")?;
        if version != "1" {
            return Err(Error::Format(format!(
                "unsupported model format version {version}"
            )));
        }

        let pca = match by_name.get("pca") {
            None => None,
            Some(s) => {
                let mean = row_vector_of(s, "mean")?;
                let components = s.require_matrix("components")?.clone();
                let eigenvalues = row_vector_of(s, "eigenvalues")?;
                if components.nrows() != mean.len()
                    || components.ncols() != mean.len()
                    || eigenvalues.len() != mean.len()
                {
                    return Err(Error::Format(
                        "pca section dimensions are inconsistent".into(),
                    ));
                }
                Some(PcaModel {
                    mean,
                    components,
                    eigenvalues,
                })
            }
        };

        let ica = match by_name.get("ica") {
            None => None,
            Some(s) => {
                let n: usize = s
                    .require_scalar("n_components")?
                    .parse()
                    .map_err(|_| Error::Format("bad n_components".into()))?;
                let converged = parse_bool(s.require_scalar("converged")?)?;
                let gaussian_warning = parse_bool(s.require_scalar("gaussian_warning")?)?;
                let normalization = match s.require_scalar("normalization")? {
                    "none" => Normalization::None,
                    "class0_mean" => Normalization::ClassZeroMean,
                    "positive_skew" => Normalization::PositiveSkew,
                    other => return Err(Error::Format(format!("unknown normalization '{other}'"))),
                };
                let component_order = parse_usize_list(s.require_scalar("component_order")?)?;
                let component_signs = parse_sign_list(s.require_scalar("component_signs")?)?;
                let center = row_vector_of(s, "center")?;
                let whitening = s.require_matrix("whitening")?.clone();
                let rotation = s.require_matrix("rotation")?.clone();
                if whitening.nrows() != n
                    || whitening.ncols() != center.len()
                    || rotation.nrows() != n
                    || rotation.ncols() != n
                    || component_order.len() != n
                    || component_signs.len() != n
                {
                    return Err(Error::Format(
                        "ica section dimensions are inconsistent".into(),
                    ));
                }
                let mut model = IcModel {
                    n_components: n,
                    center,
                    whitening,
                    rotation,
                    unmixing: Array2::zeros((0, 0)),
                    mixing_pinv: Array2::zeros((0, 0)),
                    component_order,
                    component_signs,
                    converged,
                    gaussian_warning,
                    normalization,
                };
                model.rebuild_derived()?;
                Some(model)
            }
        };

        let head = match by_name.get("head") {
            None => None,
            Some(s) => {
                let input_kind = match s.require_scalar("input_kind")? {
                    "features" => InputKind::Features,
                    "independent_components" => InputKind::IndependentComponents,
                    other => return Err(Error::Format(format!("unknown input kind '{other}'"))),
                };
                let classes: usize = s
                    .require_scalar("classes")?
                    .parse()
                    .map_err(|_| Error::Format("bad class count".into()))?;
                let weights = s.require_matrix("weights")?.clone();
                let bias = row_vector_of(s, "bias")?;
                if weights.nrows() != classes || bias.len() != classes {
                    return Err(Error::Format(
                        "head section dimensions are inconsistent".into(),
                    ));
                }
                Some(LinearHead {
                    weights,
                    bias,
                    input_kind,
                })
            }
        };

        Ok(ModelFile { pca, ica, head })
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Format(format!("bad boolean '{other}'"))),
    }
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad index '{c}'")))
        })
        .collect()
}

fn parse_sign_list(s: &str) -> Result<Vec<i8>> {
    s.split(',')
        .map(|c| match c.trim() {
            "1" => Ok(1),
            "-1" => Ok(-1),
            other => Err(Error::Format(format!("bad sign '{other}'"))),
        })
        .collect()
}

pub fn write_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn zero_head(classes: usize, dims: usize) -> LinearHead {
        LinearHead {
            weights: Array2::zeros((classes, dims)),
            bias: Array1::zeros(classes),
            input_kind: InputKind::IndependentComponents,
        }
    }

    #[test]
    fn zero_head_round_trips() {
        let model = ModelFile {
            head: Some(zero_head(5, 3)),
            ..ModelFile::default()
        };
        let text = model.to_text();
        let back = ModelFile::from_text(&text).unwrap();
        let head = back.head.unwrap();
        assert_eq!(head.weights, Array2::zeros((5, 3)));
        assert_eq!(head.bias, Array1::zeros(5));
        assert_eq!(head.input_kind, InputKind::IndependentComponents);
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let model = ModelFile {
            pca: Some(PcaModel {
                mean: array![0.25, -1.5],
                components: array![[0.6, 0.8], [0.8, -0.6]],
                eigenvalues: array![2.0, 0.5],
            }),
            head: Some(LinearHead {
                weights: array![[1.0 / 3.0, -0.125], [std::f64::consts::SQRT_2, 2.5e-9]],
                bias: array![0.1, -0.2],
                input_kind: InputKind::Features,
            }),
            ..ModelFile::default()
        };
        let text1 = model.to_text();
        let back = ModelFile::from_text(&text1).unwrap();
        let text2 = back.to_text();
        assert_eq!(text1, text2);
    }

    #[test]
    fn hand_written_matrix_parses() {
        let text = "\
[meta]
format_version = 1
[head]
input_kind = features
classes = 2
weights.rows = 2
weights.cols = 2
1.5,-2.25
0.001,3.0e2
bias.rows = 1
bias.cols = 2
0.0,1.0
";
        let model = ModelFile::from_text(text).unwrap();
        let head = model.head.unwrap();
        assert_eq!(head.weights, array![[1.5, -2.25], [0.001, 300.0]]);
        assert_eq!(head.bias, array![0.0, 1.0]);
    }

    #[test]
    fn unknown_section_is_rejected() {
        let text = "[meta]\nformat_version = 1\n[mystery]\nx = 1\n";
        let err = ModelFile::from_text(text).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let text = "\
[meta]
format_version = 1
[head]
input_kind = features
classes = 3
weights.rows = 3
weights.cols = 2
1.0,2.0
3.0,4.0
5.0,6.0
bias.rows = 1
bias.cols = 2
0.0,1.0
";
        // bias length 2 for 3 classes
        assert!(ModelFile::from_text(text).is_err());
    }

    #[test]
    fn duplicate_sections_are_rejected() {
        let text = "[meta]\nformat_version = 1\n[meta]\nformat_version = 1\n";
        let err = ModelFile::from_text(text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn malformed_scalars_are_rejected() {
        let base = "[meta]\nformat_version = 1\n[ica]\n";
        // not a boolean
        let text = format!(
            "{base}n_components = 1\nconverged = maybe\ngaussian_warning = false\n"
        );
        assert!(ModelFile::from_text(&text).is_err());
        // entries before any section
        assert!(ModelFile::from_text("x = 1\n").is_err());
        // missing the meta section entirely
        assert!(ModelFile::from_text("[pca]\n").is_err());
    }

    #[test]
    fn short_matrix_row_is_rejected() {
        let text = "\
[meta]
format_version = 1
[head]
input_kind = features
classes = 2
weights.rows = 2
weights.cols = 2
1.0,2.0
3.0
bias.rows = 1
bias.cols = 2
0.0,1.0
";
        let err = ModelFile::from_text(text).unwrap_err();
        assert!(err.to_string().contains("row 1 has 1 values"), "{err}");
    }

    #[test]
    fn float_format_is_parse_stable() {
        for &x in &[
            0.0,
            -0.0,
            1.0,
            -1.0,
            1.0 / 3.0,
            std::f64::consts::PI,
            2.5e-17,
            -3.2e12,
            f64::MIN_POSITIVE,
        ] {
            let s1 = format_float(x);
            let parsed: f64 = s1.parse().unwrap();
            let s2 = format_float(parsed);
            assert_eq!(s1, s2, "format of {x} unstable");
        }
    }
}
