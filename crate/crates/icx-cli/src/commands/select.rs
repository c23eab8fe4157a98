//! `icx select`: component-count sweep.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use icx_core::error::{Error, Result};
use icx_core::formats;
use icx_core::head::{self, InputKind};
use icx_core::ica;
use icx_core::model_file::{self, ModelFile};
use icx_core::seed;
use icx_core::selection::{self, SelectionConfig};

use crate::util;

#[derive(Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub train_features: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub val_features: PathBuf,
    #[arg(long)]
    pub val_labels: PathBuf,
    #[arg(long)]
    pub n_min: usize,
    #[arg(long)]
    pub n_max: usize,
    /// Largest kappa gap to the full-feature head still accepted
    #[arg(long, default_value_t = 0.015)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ICA contrast: logcosh or exp
    #[arg(long, default_value = "logcosh")]
    pub contrast: String,
    /// Directory for the report and the chosen model
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &SelectArgs) -> Result<()> {
    let train_features = formats::read_feature_matrix(&args.train_features)?;
    let train_labels = formats::read_labels(&args.train_labels)?;
    let val_features = formats::read_feature_matrix(&args.val_features)?;
    let val_labels = formats::read_labels(&args.val_labels)?;

    let mut cfg = SelectionConfig::new(args.seed);
    cfg.ica.contrast = util::parse_contrast(&args.contrast)?;

    let (report, model) = selection::select_components(
        &train_features,
        &train_labels,
        &val_features,
        &val_labels,
        (args.n_min, args.n_max),
        args.epsilon,
        &cfg,
    )?;

    let text = selection::report_to_text(&report);
    print!("{text}");

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let report_path = args.out_dir.join("selection_report.txt");
    fs::write(&report_path, &text).map_err(|e| Error::io(&report_path, e))?;

    // pin sign/order conventions and refit the head on the normalized
    // components so the written model is ready for explanation
    let model = ica::normalize_components(&model, &train_features, &train_labels)?;
    let train_s = ica::transform(&model, &train_features)?;
    let mut head_cfg = cfg.head.clone();
    head_cfg.seed = seed::derive(args.seed, 300);
    let ic_head = head::fit_head(
        &train_s.view(),
        &train_labels,
        InputKind::IndependentComponents,
        &head_cfg,
    )?;

    let file = ModelFile {
        ica: Some(model),
        head: Some(ic_head),
        ..ModelFile::default()
    };
    let model_path = args.out_dir.join("model.txt");
    model_file::write_model(&file, &model_path)?;
    println!("wrote {}", model_path.display());
    Ok(())
}
