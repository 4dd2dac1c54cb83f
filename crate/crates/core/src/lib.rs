//! Device-independent color measurement from linear (RAW-derived) underwater
//! imagery.
//!
//! The crate is organized around the measurement workflow:
//!
//! - [`spectral`]: spectra, camera models and forward simulation of RAW RGB
//! - [`chart`]: calibrated color charts, their registry and patch statistics
//! - [`linearity`]: radiometric linearity verification from gray patches
//! - [`isp`]: an emulator of in-camera photofinishing, used for negative tests
//! - [`water`]: distance-dependent attenuation and backscatter, forward and inverse
//! - [`colorimetry`]: camera RGB to CIE XYZ to standard RGB, and color differences
//! - [`pipeline`]: batch orchestration with provenance logging
//!
//! All pixel data is carried as `f64` relative linear exposure in `[0, 1]`.

pub mod assets;
pub mod chart;
pub mod colorimetry;
pub mod image;
pub mod io;
pub mod isp;
pub mod linearity;
pub mod pipeline;
pub mod spectral;
pub mod water;

pub use image::{ColorSpace, Encoding, ImageState, InputPolicy, LinearImage};

/// Tool version recorded in provenance logs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
