//! `icx pca`: redundancy report over a feature matrix.

use std::path::PathBuf;

use clap::Args;
use icx_core::error::Result;
use icx_core::formats;
use icx_core::model_file::{self, ModelFile};
use icx_core::pca;

use crate::util;

#[derive(Args)]
pub struct PcaArgs {
    /// Feature matrix file
    #[arg(long)]
    pub features: PathBuf,
    /// Comma-separated cumulative-variance thresholds in (0, 1]
    #[arg(long, default_value = "0.9,0.99")]
    pub thresholds: String,
    /// Optionally write the fitted model
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &PcaArgs) -> Result<()> {
    let thresholds = util::parse_f64_list(&args.thresholds)?;
    let features = formats::read_feature_matrix(&args.features)?;
    let model = pca::fit_pca(&features)?;
    let report = pca::explained_variance_report(&model, &thresholds)?;
    for (threshold, k) in report {
        println!("threshold {threshold:.4} -> k = {k}");
    }
    if let Some(out) = &args.out {
        let file = ModelFile {
            pca: Some(model),
            ..ModelFile::default()
        };
        model_file::write_model(&file, out)?;
    }
    Ok(())
}
