//! Core library behind the `icx` tool: find the minimal set of independent
//! components that preserves the ordinal-classification quality of a trained
//! classifier's feature space, and explain individual decisions through
//! per-component score decompositions and spatial heatmaps.
//!
//! The pipeline, end to end:
//!
//! 1. [`pca`] appraises the redundancy of the feature space and provides the
//!    whitening step.
//! 2. [`ica`] estimates an unmixing matrix with a fixed-point negentropy
//!    solver so transformed components are as statistically independent as
//!    possible.
//! 3. [`head`] fits linear classifiers over the full feature space and over
//!    the reduced component space; [`metrics`] scores both with the quadratic
//!    weighted kappa.
//! 4. [`selection`] sweeps the component count and picks the smallest one
//!    whose kappa stays within a tolerance of the full-feature baseline.
//! 5. [`scoremap`] decomposes class scores into per-component contributions
//!    and localizes each component in spatial feature maps (and, through a
//!    receptive-field projection, in input space).
//! 6. [`tsne`] embeds both spaces in 2-D for qualitative comparison.
//!
//! [`formats`] and [`model_file`] define the on-disk formats; [`synthetic`]
//! generates datasets with planted ground truth used as test oracles.
//!
//! All randomness is drawn from ChaCha8 generators seeded from a single
//! 64-bit master seed (see [`seed`]); every operation is deterministic per
//! seed, byte-for-byte in its serialized outputs.

pub mod error;
pub mod formats;
pub mod head;
pub mod ica;
pub mod linalg;
pub mod metrics;
pub mod model_file;
pub mod pca;
pub mod scoremap;
pub mod seed;
pub mod selection;
pub mod synthetic;
pub mod tsne;

pub use error::{Error, Result};
pub use formats::{FeatureMatrix, LabelVector, SpatialFeatureMap};
pub use head::{FitConfig, LinearHead};
pub use ica::{IcModel, IcaConfig};
pub use metrics::ConfusionMatrix;
pub use model_file::ModelFile;
pub use pca::PcaModel;
pub use scoremap::{ContributionTable, ReceptiveFieldSpec, SpatialScoreMap};
pub use selection::SelectionReport;
pub use synthetic::{PlantedDataset, SourceSpec};
pub use tsne::TsneConfig;
