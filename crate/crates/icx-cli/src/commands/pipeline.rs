//! `icx pipeline`: redundancy report, component-count selection, sign
//! normalization, head refit, per-image explanations and optional
//! embeddings, driven by one config file. Every produced file lands in the
//! manifest with its content hash; a failing stage still writes the
//! partial manifest before the error propagates.

use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::Args;
use icx_core::error::{Error, Result};
use icx_core::formats;
use icx_core::head::{self, InputKind};
use icx_core::ica;
use icx_core::model_file::{self, ModelFile};
use icx_core::pca;
use icx_core::seed;
use icx_core::selection::{self, SelectionConfig};
use icx_core::tsne::{self, TsneConfig};

use crate::commands::explain::{explain_image, ExplainSpec};
use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::util;

// seed stream tags for the stages the sweep itself does not cover
const TAG_FINAL_HEAD: u64 = 300;
const TAG_TSNE_FEATURES: u64 = 400;
const TAG_TSNE_COMPONENTS: u64 = 401;

const PCA_REPORT_THRESHOLDS: [f64; 3] = [0.9, 0.95, 0.99];

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline config file ([pipeline] section, key = value lines)
    #[arg(long)]
    pub config: PathBuf,
}

pub fn run(args: &PipelineArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let mut manifest = Manifest::new();
    let outcome = run_stages(&cfg, &mut manifest);
    // the manifest covers whatever was produced, even on failure
    let manifest_path = manifest.write(&cfg.out_dir)?;
    outcome?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn run_stages(cfg: &PipelineConfig, manifest: &mut Manifest) -> Result<()> {
    let train_features = formats::read_feature_matrix(&cfg.train_features)?;
    let train_labels = formats::read_labels(&cfg.train_labels)?;
    let val_features = formats::read_feature_matrix(&cfg.val_features)?;
    let val_labels = formats::read_labels(&cfg.val_labels)?;

    // redundancy report
    let pca_model = pca::fit_pca(&train_features)?;
    let report = pca::explained_variance_report(&pca_model, &PCA_REPORT_THRESHOLDS)?;
    let mut text = String::new();
    for (threshold, k) in &report {
        text.push_str(&format!("threshold {threshold:.4} -> k = {k}\n"));
    }
    let pca_report_path = cfg.out_dir.join("pca_report.txt");
    fs::write(&pca_report_path, &text).map_err(|e| Error::io(&pca_report_path, e))?;
    manifest.record(&cfg.out_dir, &pca_report_path)?;

    // component-count selection
    let mut selection_cfg = SelectionConfig::new(cfg.seed);
    selection_cfg.ica = cfg.ica.clone();
    selection_cfg.head = cfg.head.clone();
    let (selection_report, chosen) = selection::select_components(
        &train_features,
        &train_labels,
        &val_features,
        &val_labels,
        (cfg.n_min, cfg.n_max),
        cfg.epsilon,
        &selection_cfg,
    )?;
    let report_text = selection::report_to_text(&selection_report);
    print!("{report_text}");
    let report_path = cfg.out_dir.join("selection_report.txt");
    fs::write(&report_path, &report_text).map_err(|e| Error::io(&report_path, e))?;
    manifest.record(&cfg.out_dir, &report_path)?;

    // pin conventions, refit the head on normalized components
    let model = ica::normalize_components(&chosen, &train_features, &train_labels)?;
    let train_s = ica::transform(&model, &train_features)?;
    let mut head_cfg = cfg.head.clone();
    head_cfg.seed = seed::derive(cfg.seed, TAG_FINAL_HEAD);
    let ic_head = head::fit_head(
        &train_s.view(),
        &train_labels,
        InputKind::IndependentComponents,
        &head_cfg,
    )?;

    let file = ModelFile {
        pca: Some(pca_model),
        ica: Some(model),
        head: Some(ic_head),
    };
    let model_path = cfg.out_dir.join("model.txt");
    model_file::write_model(&file, &model_path)?;
    manifest.record(&cfg.out_dir, &model_path)?;
    let model = file.ica.as_ref().expect("just written");
    let ic_head = file.head.as_ref().expect("just written");

    // explanations
    if let Some(fmap_path) = &cfg.fmap {
        let fmap = formats::read_spatial_map(fmap_path)?;
        let images: Vec<usize> = match &cfg.explain_images {
            Some(list) => list.clone(),
            None => (0..fmap.images().min(4)).collect(),
        };
        for &image in &images {
            if image >= fmap.images() {
                return Err(Error::Validation(format!(
                    "explain image {image} out of range ({} images)",
                    fmap.images()
                )));
            }
        }
        let spec = ExplainSpec {
            model,
            head: Some(ic_head),
            fmap: &fmap,
            components: (0..model.n_components).collect(),
            sigma_mode: cfg.sigma_mode,
            arch: cfg.arch.clone(),
            input_size: cfg.input_size,
        };

        let produced = explain_batch(&spec, &images, cfg)?;
        for path in &produced {
            manifest.record(&cfg.out_dir, path)?;
        }
    }

    // qualitative embeddings of both spaces
    if cfg.tsne {
        let base = TsneConfig {
            perplexity: cfg.tsne_perplexity,
            iterations: cfg.tsne_iterations,
            ..TsneConfig::default()
        };
        let x = val_features.to_f64();
        let features_cfg = TsneConfig {
            seed: seed::derive(cfg.seed, TAG_TSNE_FEATURES),
            ..base.clone()
        };
        let embedded = tsne::run_tsne(&x.view(), &features_cfg)?;
        let features_svg = cfg.out_dir.join("tsne_features.svg");
        tsne::embedding_to_svg(&embedded.embedding.view(), Some(&val_labels), &features_svg)?;
        manifest.record(&cfg.out_dir, &features_svg)?;

        let s = ica::transform_array(model, &x.view())?;
        let components_cfg = TsneConfig {
            seed: seed::derive(cfg.seed, TAG_TSNE_COMPONENTS),
            ..base
        };
        let embedded = tsne::run_tsne(&s.view(), &components_cfg)?;
        let components_svg = cfg.out_dir.join("tsne_components.svg");
        tsne::embedding_to_svg(
            &embedded.embedding.view(),
            Some(&val_labels),
            &components_svg,
        )?;
        manifest.record(&cfg.out_dir, &components_svg)?;
    }

    Ok(())
}

/// Explains every requested image, fanning out over `ICX_THREADS` workers
/// when set. Per-image outputs are distinct files, so the results are
/// byte-identical regardless of the worker count.
fn explain_batch(
    spec: &ExplainSpec,
    images: &[usize],
    cfg: &PipelineConfig,
) -> Result<Vec<PathBuf>> {
    let workers = util::worker_count();
    if workers < 2 || images.len() < 2 {
        let mut produced = Vec::new();
        for &image in images {
            produced.extend(explain_image(spec, image, &cfg.out_dir)?);
        }
        return Ok(produced);
    }

    let results: Vec<Mutex<Option<Result<Vec<PathBuf>>>>> =
        images.iter().map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(images.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= images.len() {
                    break;
                }
                let outcome = explain_image(spec, images[idx], &cfg.out_dir);
                *results[idx].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut produced = Vec::new();
    for slot in results {
        let outcome = slot
            .into_inner()
            .unwrap()
            .expect("every image was processed");
        produced.extend(outcome?);
    }
    Ok(produced)
}
