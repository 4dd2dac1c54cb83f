//! Camera RGB → CIE XYZ → standard RGB, and CIE 1976 color differences.

mod ccm;
mod lab;
mod srgb;

pub use ccm::{
    camera_rgb_to_xyz, camera_to_xyz, chart_targets, fit_ccm, fit_ccm_from_sensitivities,
    fit_chart_ccm, CalibrationSource, CcmFitOptions, ColorCalibration, MIN_FIT_PAIRS,
};
pub use lab::{delta_e76, xyz_to_lab, Lab};
pub use srgb::{
    srgb_decode, srgb_encode, standard_rgb_to_xyz, xyz_image_to_standard_rgb,
    xyz_to_standard_rgb, StandardRgb, D65_WHITE_XYZ, XYZ_TO_SRGB,
};

use thiserror::Error;

use crate::assets;
use crate::image::ImageError;
use crate::io::spectra::parse_csv;
use crate::spectral::{integrate_product, Spectrum, SpectrumError, SpectrumKind};

pub type Xyz = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("illuminant has zero luminance (∫ȳ·E = 0)")]
    ZeroIlluminance,
    #[error("need at least {MIN_FIT_PAIRS} patch pairs, got {0}")]
    TooFewPairs(usize),
    #[error("{0} camera values but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("camera RGB values do not span three dimensions (singular value ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("fitted matrix is singular")]
    Singular,
    #[error("weights must be positive and one per pair")]
    InvalidWeights,
    #[error("white point components must be positive, got {0:?}")]
    NonPositiveWhite([f64; 3]),
    #[error("expected an image in {expected}, got {got:?}")]
    WrongSpace {
        expected: &'static str,
        got: crate::image::ColorSpace,
    },
    #[error("chart: {0}")]
    Chart(String),
}

/// Standard-observer color-matching functions.
#[derive(Debug, Clone, PartialEq)]
pub struct CmfSet {
    pub x: Spectrum,
    pub y: Spectrum,
    pub z: Spectrum,
}

impl CmfSet {
    pub fn new(x: Spectrum, y: Spectrum, z: Spectrum) -> Result<Self, ColorError> {
        for s in [&x, &y, &z] {
            s.expect_kind(SpectrumKind::Cmf)?;
        }
        if y.values().iter().all(|&v| v == 0.0) {
            return Err(ColorError::ZeroIlluminance);
        }
        Ok(Self { x, y, z })
    }

    /// The bundled CIE 1931 2° observer.
    pub fn cie1931() -> Self {
        let k = SpectrumKind::Cmf;
        Self::new(
            parse_csv(assets::CMF_X_CSV, k, "builtin:xbar").expect("bundled"),
            parse_csv(assets::CMF_Y_CSV, k, "builtin:ybar").expect("bundled"),
            parse_csv(assets::CMF_Z_CSV, k, "builtin:zbar").expect("bundled"),
        )
        .expect("bundled CMFs are valid")
    }

    fn on_grid(&self) -> [Spectrum; 3] {
        [
            self.x.to_standard_grid(),
            self.y.to_standard_grid(),
            self.z.to_standard_grid(),
        ]
    }
}

/// Tristimulus values of a surface, normalized so a perfect reflector has `Y = 1`.
pub fn patch_xyz(reflectance: &Spectrum, illuminant: &Spectrum, cmf: &CmfSet) -> Result<Xyz, ColorError> {
    reflectance.expect_kind(SpectrumKind::Reflectance)?;
    illuminant.expect_kind(SpectrumKind::Illuminant)?;
    let r = reflectance.to_standard_grid();
    let e = illuminant.to_standard_grid();
    let one = Spectrum::constant(1.0, SpectrumKind::Reflectance)?;
    let [xb, yb, zb] = cmf.on_grid();
    let norm = integrate_product(&yb, &e, &one)?;
    if norm <= 0.0 {
        return Err(ColorError::ZeroIlluminance);
    }
    let k = 1.0 / norm;
    Ok([
        k * integrate_product(&xb, &e, &r)?,
        k * integrate_product(&yb, &e, &r)?,
        k * integrate_product(&zb, &e, &r)?,
    ])
}

/// XYZ of the perfect reflector under `illuminant` (`Y = 1`).
pub fn white_point(illuminant: &Spectrum, cmf: &CmfSet) -> Result<Xyz, ColorError> {
    patch_xyz(
        &Spectrum::constant(1.0, SpectrumKind::Reflectance)?,
        illuminant,
        cmf,
    )
}
