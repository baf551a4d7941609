//! Physics and data layer for multimodal lunar terrain work.
//!
//! The crate covers four loosely coupled areas:
//!
//! * [`photometry`] and [`render`]: Hapke AMSA and Lambert reflectance, and the
//!   forward model that turns a DEM plus an albedo map into an I/F image.
//! * [`terrain`] and [`sfs`]: DEM calculus, synthetic crater terrain, and the
//!   variational shape-and-albedo-from-shading solver.
//! * [`dataset`] and [`vq`]: SFSR raster I/O, patch slicing, normalization,
//!   Dirichlet masking and the EMA vector-quantization codebook.
//! * [`metrics`]: MSE/RMSE/PSNR/SSIM, remaining error and the modality-wise
//!   cross-entropy.

pub mod config;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod photometry;
pub mod render;
pub mod sfs;
pub mod terrain;
pub mod vq;

pub use error::{Error, Result};
pub use grid::Grid;
