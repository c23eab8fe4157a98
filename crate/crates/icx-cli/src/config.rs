//! Pipeline configuration: the same line-oriented `key = value` format as
//! model files, one `[pipeline]` section. Paths are validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use icx_core::error::{Error, Result};
use icx_core::head::FitConfig;
use icx_core::ica::IcaConfig;
use icx_core::model_file::{parse_sections, Section};
use icx_core::scoremap::{LayerSpec, SigmaMode};

use crate::util;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub train_features: PathBuf,
    pub train_labels: PathBuf,
    pub val_features: PathBuf,
    pub val_labels: PathBuf,
    pub fmap: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub n_min: usize,
    pub n_max: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Template; `n_components` and `seed` are derived per stage.
    pub ica: IcaConfig,
    /// Template; `seed` is derived per stage.
    pub head: FitConfig,
    pub tsne: bool,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
    /// Images to explain; defaults to the first few in the feature map.
    pub explain_images: Option<Vec<usize>>,
    pub sigma_mode: SigmaMode,
    /// Convolution stack for projecting grid scores into input space.
    pub arch: Option<Vec<LayerSpec>>,
    pub input_size: Option<(usize, usize)>,
}

fn get<'a>(section: &'a Section, key: &str) -> Option<&'a str> {
    section.scalar(key)
}

fn require<'a>(section: &'a Section, key: &str) -> Result<&'a str> {
    get(section, key)
        .ok_or_else(|| Error::Validation(format!("pipeline config is missing '{key}'")))
}

fn parse_or<T: std::str::FromStr>(section: &Section, key: &str, default: T) -> Result<T> {
    match get(section, key) {
        None => Ok(default),
        Some(v) => v
            .parse::<T>()
            .map_err(|_| Error::Format(format!("bad value '{v}' for '{key}'"))),
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sections = parse_sections(&text)?;
        let section = sections
            .iter()
            .find(|s| s.name == "pipeline")
            .ok_or_else(|| Error::Format("config needs a [pipeline] section".into()))?;
        for s in &sections {
            if s.name != "pipeline" {
                return Err(Error::Format(format!(
                    "unknown config section [{}]",
                    s.name
                )));
            }
        }

        let mut ica = IcaConfig::new(1);
        if let Some(contrast) = get(section, "ica_contrast") {
            ica.contrast = util::parse_contrast(contrast)?;
        }
        ica.tol = parse_or(section, "ica_tol", ica.tol)?;
        ica.max_iter = parse_or(section, "ica_max_iter", ica.max_iter)?;
        ica.restarts = parse_or(section, "ica_restarts", ica.restarts)?;

        let mut head = FitConfig::default();
        head.l2 = parse_or(section, "head_l2", head.l2)?;
        head.learning_rate = parse_or(section, "head_learning_rate", head.learning_rate)?;
        head.epochs = parse_or(section, "head_epochs", head.epochs)?;

        let explain_images = match get(section, "explain_images") {
            None => None,
            Some(v) => Some(util::parse_usize_list(v)?),
        };
        let sigma_mode = match get(section, "sigma_mode") {
            None => SigmaMode::PerImage,
            Some(v) => util::parse_sigma_mode(v)?,
        };
        let arch = match get(section, "arch") {
            None => None,
            Some(v) => Some(util::parse_arch(v)?),
        };
        let input_size = match get(section, "input_size") {
            None => None,
            Some(v) => Some(util::parse_size(v)?),
        };

        let cfg = PipelineConfig {
            train_features: require(section, "train_features")?.into(),
            train_labels: require(section, "train_labels")?.into(),
            val_features: require(section, "val_features")?.into(),
            val_labels: require(section, "val_labels")?.into(),
            fmap: get(section, "fmap").map(PathBuf::from),
            out_dir: require(section, "out_dir")?.into(),
            n_min: parse_or(section, "n_min", 1)?,
            n_max: parse_or(section, "n_max", 10)?,
            epsilon: parse_or(section, "epsilon", 0.015)?,
            seed: parse_or(section, "seed", 0)?,
            ica,
            head,
            tsne: parse_or(section, "tsne", false)?,
            tsne_perplexity: parse_or(section, "tsne_perplexity", 30.0)?,
            tsne_iterations: parse_or(section, "tsne_iterations", 1000)?,
            explain_images,
            sigma_mode,
            arch,
            input_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every referenced input exists before any computation runs.
    fn validate(&self) -> Result<()> {
        for (what, path) in [
            ("train_features", &self.train_features),
            ("train_labels", &self.train_labels),
            ("val_features", &self.val_features),
            ("val_labels", &self.val_labels),
        ] {
            if !path.is_file() {
                return Err(Error::Validation(format!(
                    "{what} path does not exist: {}",
                    path.display()
                )));
            }
        }
        if let Some(fmap) = &self.fmap {
            if !fmap.is_file() {
                return Err(Error::Validation(format!(
                    "fmap path does not exist: {}",
                    fmap.display()
                )));
            }
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::Validation(format!(
                "bad component range {}..={}",
                self.n_min, self.n_max
            )));
        }
        if self.arch.is_some() != self.input_size.is_some() {
            return Err(Error::Validation(
                "arch and input_size must be given together".into(),
            ));
        }
        Ok(())
    }
}
