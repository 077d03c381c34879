//! Desk-scale 3D Gaussian Splatting for fruit damage inspection.
//!
//! The pipeline trains a Gaussian splat from posed images where every
//! Gaussian carries two extra learnable logits: a strawberry-membership
//! channel and a bruise-likelihood channel, supervised by 2D pseudo-ground
//! truth masks. A trained splat is then self-filtered by strawberry score
//! and the share of bruised surface points is compared between a
//! pre-manipulation and a post-manipulation reconstruction.
//!
//! Modules:
//! - [`colmap`]: COLMAP sparse-model parsing/writing (binary and text)
//! - [`dataset`]: dataset assembly and synthetic oracle scenes
//! - [`gaussian`]: the splat primitive, initialization, PLY import/export
//! - [`render`]: differentiable tile-based rasterizer with semantic stop-grad
//! - [`train`]: L1 + D-SSIM + BCE training loop with adaptive moments
//! - [`damage`]: strawberry filtering, bruise percentage, stiffness retention
//! - [`tactile`]: tactile image differencing and contact-energy detection
//! - [`cli`]: the `fruitsplat` command-line pipeline
//!
//! Runnable demos for each capability live under `examples/`.

pub mod cli;
pub mod colmap;
pub mod damage;
pub mod dataset;
pub mod gaussian;
pub mod img;
pub mod math;
pub mod render;
pub mod tactile;
pub mod train;

pub use colmap::{CameraFrame, CameraIntrinsics, CameraModel, SparsePoint};
pub use damage::{DamageReport, FilteredPointCloud, StiffnessRecord};
pub use dataset::{SyntheticSceneSpec, TrainingSample};
pub use gaussian::{Gaussian, GaussianCloud};
pub use render::{RenderConfig, RenderOutput};
pub use train::{LossBreakdown, TrainConfig};
