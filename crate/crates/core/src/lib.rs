//! Joint BM3D denoising of polarization camera images, with the tools around
//! it: Stokes algebra, noise simulation, channel-transform search, scoring and
//! dataset I/O. See the crate examples for one program per capability.

// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bm3d;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod optimize;
pub mod pbm3d;
pub mod plane;
pub mod polar;

pub use error::{Error, Result};
pub use plane::Plane;
pub use polar::{CameraImage, ChannelTransform, PolarizationMaps, StokesImage};
