//! `icx synth`: planted synthetic dataset generation.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use icx_core::error::{Error, Result};
use icx_core::formats;
use icx_core::synthetic::{self, SourceSpec};

use crate::util;

#[derive(Args)]
pub struct SynthArgs {
    /// Directory for the generated files
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Master seed; every output byte is a function of it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated source distributions (laplace, uniform, gaussian)
    #[arg(long, default_value = "laplace,laplace,uniform")]
    pub sources: String,
    /// Ambient feature dimension
    #[arg(long, default_value_t = 64)]
    pub ambient_dim: usize,
    /// Training rows
    #[arg(long, default_value_t = 2500)]
    pub train: usize,
    /// Validation rows
    #[arg(long, default_value_t = 1200)]
    pub val: usize,
    /// Standard deviation of the Gaussian feature noise
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    /// Ordinal class count
    #[arg(long, default_value_t = 5)]
    pub classes: u32,
    /// Also build spatial feature maps of this grid size (HxW)
    #[arg(long)]
    pub spatial: Option<String>,
    /// Bumps per grid cell in the spatial maps
    #[arg(long, default_value_t = 0.015625)]
    pub lesion_density: f64,
    /// Number of validation images to build spatial maps for
    #[arg(long, default_value_t = 8)]
    pub spatial_count: usize,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let distributions = util::parse_distributions(&args.sources)?;
    let spec = SourceSpec::new(distributions, args.seed)?;
    let total = args
        .train
        .checked_add(args.val)
        .ok_or_else(|| Error::Validation("train + val overflows".into()))?;
    if args.train == 0 || args.val == 0 {
        return Err(Error::Validation(
            "train and val row counts must be positive".into(),
        ));
    }

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let dataset = synthetic::plant_dataset(
        &spec,
        total,
        args.ambient_dim,
        args.noise_sigma,
        args.classes,
        args.seed,
    )?;
    let train = dataset.subset(0, args.train)?;
    let val = dataset.subset(args.train, total)?;

    formats::write_feature_matrix(&train.features, args.out_dir.join("train.fmat"))?;
    formats::write_labels(&train.labels, args.out_dir.join("train.lbl"))?;
    formats::write_feature_matrix(&val.features, args.out_dir.join("val.fmat"))?;
    formats::write_labels(&val.labels, args.out_dir.join("val.lbl"))?;

    let mut bumps = None;
    if let Some(spatial) = &args.spatial {
        let (h, w) = util::parse_size(spatial)?;
        let count = args.spatial_count.min(args.val);
        if count == 0 {
            return Err(Error::Validation("spatial_count must be positive".into()));
        }
        let subset = val.subset(0, count)?;
        let plant = synthetic::plant_spatial(&subset, h, w, args.lesion_density)?;
        formats::write_spatial_map(&plant.map, args.out_dir.join("val.fmap"))?;
        bumps = Some(plant.bumps);
    }
    synthetic::write_ground_truth(&dataset, bumps.as_deref(), args.out_dir.join("truth.txt"))?;

    println!(
        "wrote {} train rows, {} val rows, dim {} to {}",
        args.train,
        args.val,
        args.ambient_dim,
        args.out_dir.display()
    );
    Ok(())
}
