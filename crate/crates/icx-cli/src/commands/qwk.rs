//! `icx qwk`: agreement between two label files.

use std::path::PathBuf;

use clap::Args;
use icx_core::error::Result;
use icx_core::formats;
use icx_core::metrics;

#[derive(Args)]
pub struct QwkArgs {
    /// True labels
    #[arg(long)]
    pub labels: PathBuf,
    /// Predicted labels
    #[arg(long)]
    pub preds: PathBuf,
}

pub fn run(args: &QwkArgs) -> Result<()> {
    let labels = formats::read_labels(&args.labels)?;
    let preds = formats::read_labels(&args.preds)?;
    let conf = metrics::confusion(&labels, &preds)?;
    let kappa = metrics::qwk(&conf)?;
    println!("{kappa:.6}");
    Ok(())
}
