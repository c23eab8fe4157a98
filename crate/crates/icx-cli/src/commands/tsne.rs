//! `icx tsne`: 2-D embedding of a feature matrix.

use std::path::PathBuf;

use clap::Args;
use icx_core::error::Result;
use icx_core::formats;
use icx_core::tsne::{self, TsneConfig};

#[derive(Args)]
pub struct TsneArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Labels for coloring the scatter
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output SVG path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &TsneArgs) -> Result<()> {
    let features = formats::read_feature_matrix(&args.features)?;
    let labels = match &args.labels {
        None => None,
        Some(path) => Some(formats::read_labels(path)?),
    };
    let cfg = TsneConfig {
        perplexity: args.perplexity,
        iterations: args.iterations,
        seed: args.seed,
        ..TsneConfig::default()
    };
    let x = features.to_f64();
    let result = tsne::run_tsne(&x.view(), &cfg)?;
    tsne::embedding_to_svg(&result.embedding.view(), labels.as_ref(), &args.out)?;
    println!(
        "wrote {} (final divergence {:.6})",
        args.out.display(),
        result.kl_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
