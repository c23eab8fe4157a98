//! `icx head fit` / `icx head eval`: the linear classification head.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use icx_core::error::{Error, Result};
use icx_core::formats;
use icx_core::head::{self, FitConfig, InputKind};
use icx_core::ica;
use icx_core::model_file::{self, ModelFile};

#[derive(Subcommand)]
pub enum HeadCommand {
    /// Fit a head on raw features, or on components through a model
    Fit(FitArgs),
    /// Evaluate a fitted head: prints validation kappa
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Model file with an ica section; when given, the head is fitted on
    /// the transformed components and the output keeps the ica section
    #[arg(long)]
    pub ic_model: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model file with a head section (and an ica section for component heads)
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

pub fn run(cmd: &HeadCommand) -> Result<()> {
    match cmd {
        HeadCommand::Fit(args) => fit(args),
        HeadCommand::Eval(args) => eval(args),
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let features = formats::read_feature_matrix(&args.features)?;
    let labels = formats::read_labels(&args.labels)?;
    let cfg = FitConfig {
        l2: args.l2,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        seed: args.seed,
        standardize: true,
    };

    let file = match &args.ic_model {
        None => {
            let x = features.to_f64();
            let fitted = head::fit_head(&x.view(), &labels, InputKind::Features, &cfg)?;
            ModelFile {
                head: Some(fitted),
                ..ModelFile::default()
            }
        }
        Some(model_path) => {
            let model = model_file::read_model(model_path)?;
            let ic = model.ica.ok_or_else(|| {
                Error::Validation(format!("{} has no ica section", model_path.display()))
            })?;
            let s = ica::transform(&ic, &features)?;
            let fitted =
                head::fit_head(&s.view(), &labels, InputKind::IndependentComponents, &cfg)?;
            ModelFile {
                ica: Some(ic),
                head: Some(fitted),
                ..ModelFile::default()
            }
        }
    };
    model_file::write_model(&file, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let file = model_file::read_model(&args.head)?;
    let fitted = file
        .head
        .ok_or_else(|| Error::Validation(format!("{} has no head section", args.head.display())))?;
    let features = formats::read_feature_matrix(&args.features)?;
    let labels = formats::read_labels(&args.labels)?;

    let kappa = match fitted.input_kind {
        InputKind::Features => {
            let x = features.to_f64();
            head::evaluate(&fitted, &x.view(), &labels)?
        }
        InputKind::IndependentComponents => {
            let ic = file.ica.ok_or_else(|| {
                Error::Validation(
                    "head expects independent components but the file has no ica section".into(),
                )
            })?;
            let s = ica::transform(&ic, &features)?;
            head::evaluate(&fitted, &s.view(), &labels)?
        }
    };
    println!("{kappa:.6}");
    Ok(())
}
