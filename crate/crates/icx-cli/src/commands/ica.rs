//! `icx ica`: fit an independent-component model.

use std::path::PathBuf;

use clap::Args;
use icx_core::error::Result;
use icx_core::formats;
use icx_core::ica::{self, IcaConfig};
use icx_core::model_file::{self, ModelFile};

use crate::util;

#[derive(Args)]
pub struct IcaArgs {
    /// Feature matrix file
    #[arg(long)]
    pub features: PathBuf,
    /// Number of components to estimate
    #[arg(long)]
    pub n_components: usize,
    /// Contrast nonlinearity: logcosh or exp
    #[arg(long, default_value = "logcosh")]
    pub contrast: String,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Labels for pinning the component sign/order conventions
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &IcaArgs) -> Result<()> {
    let features = formats::read_feature_matrix(&args.features)?;
    let cfg = IcaConfig {
        n_components: args.n_components,
        contrast: util::parse_contrast(&args.contrast)?,
        tol: args.tol,
        max_iter: args.max_iter,
        restarts: args.restarts,
        seed: args.seed,
    };
    let mut model = ica::fit_ica(&features, &cfg)?;
    if let Some(labels_path) = &args.labels {
        let labels = formats::read_labels(labels_path)?;
        model = ica::normalize_components(&model, &features, &labels)?;
    }
    if !model.converged {
        eprintln!(
            "warning: fit did not converge{}",
            if model.gaussian_warning {
                " (components look Gaussian)"
            } else {
                ""
            }
        );
    }
    let file = ModelFile {
        ica: Some(model),
        ..ModelFile::default()
    };
    model_file::write_model(&file, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
