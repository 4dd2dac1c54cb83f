//! Spectral data, camera models and forward simulation of RAW RGB values.
//!
//! Every integral in the crate is evaluated on one internal grid,
//! [`standard_grid`]: 380–690 nm at 5 nm. Spectra are resampled onto it with
//! piecewise-linear interpolation and zero extension, then integrated with the
//! trapezoidal rule, which is exact for that representation.

mod camera;
mod render;
mod spectrum;

pub use camera::{simulate_raw_rgb, CameraModel, RawRgb, SceneSample, CHANNEL_NAMES};
pub use render::{add_noise, render_chart_image, NoiseModel};
pub use spectrum::{
    integrate_product, standard_grid, trapezoid, Spectrum, SpectrumKind, GRID_END_NM,
    GRID_START_NM, GRID_STEP_NM, MAX_WAVELENGTH_NM, MIN_WAVELENGTH_NM,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("spectrum needs at least {min} samples, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("wavelength and value arrays differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("wavelengths must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("wavelength {0} nm lies outside [300, 830] nm")]
    OutOfRange(f64),
    #[error("{kind:?} value {value} at {wavelength} nm is outside its valid range")]
    InvalidValue {
        kind: SpectrumKind,
        wavelength: f64,
        value: f64,
    },
    #[error("resampling grid is empty")]
    EmptyGrid,
    #[error("spectra are sampled on different grids; resample first")]
    MismatchedGrids,
    #[error("expected a {expected:?} spectrum, got {got:?}")]
    WrongKind {
        expected: SpectrumKind,
        got: SpectrumKind,
    },
    #[error("camera model: {0}")]
    Camera(String),
    #[error("exposure must be positive and finite, got {0}")]
    Exposure(f64),
    #[error("render: {0}")]
    Render(String),
}
