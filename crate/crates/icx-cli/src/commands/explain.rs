//! `icx explain`: per-component heatmaps and the score decomposition for
//! one image of a spatial feature map.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use icx_core::error::{Error, Result};
use icx_core::formats::{self, SpatialFeatureMap};
use icx_core::head::{InputKind, LinearHead};
use icx_core::ica::{self, IcModel};
use icx_core::model_file;
use icx_core::scoremap::{self, SigmaMode};

use crate::util;

#[derive(Args)]
pub struct ExplainArgs {
    /// Model file with an ica section (and a head section for the
    /// contribution table)
    #[arg(long)]
    pub model: PathBuf,
    /// Spatial feature map file
    #[arg(long)]
    pub fmap: PathBuf,
    /// Image index inside the feature map
    #[arg(long)]
    pub image: usize,
    /// Component index, or "all"
    #[arg(long, default_value = "all")]
    pub component: String,
    /// Threshold population: per-image or global:<value>
    #[arg(long, default_value = "per-image")]
    pub sigma: String,
    /// Convolution stack (kernel,stride,padding;...) for input-space maps
    #[arg(long)]
    pub arch: Option<String>,
    /// Input size HxW, required with --arch
    #[arg(long)]
    pub input_size: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub struct ExplainSpec<'a> {
    pub model: &'a IcModel,
    pub head: Option<&'a LinearHead>,
    pub fmap: &'a SpatialFeatureMap,
    pub components: Vec<usize>,
    pub sigma_mode: SigmaMode,
    pub arch: Option<Vec<scoremap::LayerSpec>>,
    pub input_size: Option<(usize, usize)>,
}

/// Writes the heatmaps and contribution table for one image; returns the
/// produced paths. Shared by the subcommand and the pipeline.
pub fn explain_image(spec: &ExplainSpec, image: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut produced = Vec::new();
    for &component in &spec.components {
        let map =
            scoremap::spatial_ic_map(spec.model, spec.fmap, image, component, spec.sigma_mode)?;
        let rendered = match (&spec.arch, spec.input_size) {
            (Some(arch), Some(input)) => {
                let rf = scoremap::receptive_field(arch)?;
                scoremap::project_to_input(&map, &rf, input)?
            }
            _ => scoremap::masked_grid_map(&map),
        };
        let path = out_dir.join(format!("img{image:04}_ic{component}.pgm"));
        scoremap::render_heatmap(&rendered.view(), None, &path)?;
        produced.push(path);
    }

    if let Some(head) = spec.head {
        let pooled = spec.fmap.pooled(image);
        let pooled_mat = ndarray::Array2::from_shape_vec((1, pooled.len()), pooled.to_vec())
            .expect("pooled row");
        let s = ica::transform_array(spec.model, &pooled_mat.view())?;
        let table = scoremap::component_contributions(head, &s.row(0))?;
        let path = out_dir.join(format!("img{image:04}_contributions.txt"));
        fs::write(&path, table.to_text()).map_err(|e| Error::io(&path, e))?;
        produced.push(path);
    }
    Ok(produced)
}

pub fn run(args: &ExplainArgs) -> Result<()> {
    let file = model_file::read_model(&args.model)?;
    let model = file
        .ica
        .ok_or_else(|| Error::Validation(format!("{} has no ica section", args.model.display())))?;
    let head = match &file.head {
        Some(h) if h.input_kind == InputKind::IndependentComponents => Some(h),
        _ => None,
    };
    let fmap = formats::read_spatial_map(&args.fmap)?;

    let components = if args.component == "all" {
        (0..model.n_components).collect()
    } else {
        vec![args
            .component
            .parse::<usize>()
            .map_err(|_| Error::Validation(format!("bad component '{}'", args.component)))?]
    };
    let arch = match &args.arch {
        None => None,
        Some(s) => Some(util::parse_arch(s)?),
    };
    let input_size = match &args.input_size {
        None => None,
        Some(s) => Some(util::parse_size(s)?),
    };
    if arch.is_some() != input_size.is_some() {
        return Err(Error::Validation(
            "--arch and --input-size must be given together".into(),
        ));
    }

    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let spec = ExplainSpec {
        model: &model,
        head,
        fmap: &fmap,
        components,
        sigma_mode: util::parse_sigma_mode(&args.sigma)?,
        arch,
        input_size,
    };
    let produced = explain_image(&spec, args.image, &args.out_dir)?;
    for path in produced {
        println!("wrote {}", path.display());
    }
    Ok(())
}
