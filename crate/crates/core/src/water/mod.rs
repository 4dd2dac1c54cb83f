//! Distance-dependent attenuation and backscatter.
//!
//! Per pixel and channel the observed signal is
//! `I = J·exp(−β_D·z) + B∞·(1 − exp(−β_B·z))`, with `z` the camera-to-object
//! distance. This module evaluates that model, inverts it, and estimates its
//! parameters from chart observations.

mod estimate;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{PatchStat, CLIP_LEVEL};
use crate::image::{ImageError, InputPolicy, LinearImage};

pub use estimate::{
    estimate_attenuation, estimate_backscatter, AttenuationFit, AttenuationObservation,
    BackscatterFit, BackscatterOptions, DEFAULT_DARK_FRACTION, DEPTH_BINS, MIN_DEPTH_RATIO,
};
pub use solver::{fit_saturating_exponential, SolverReport, MAX_ITERATIONS, STEP_TOLERANCE};

/// Transmission below which recovered values are flagged as meaningless.
pub const DEFAULT_T_MIN: f64 = 0.02;
/// Largest clipped fraction tolerated on the white patch for close-up balancing.
pub const MAX_WHITE_CLIPPED_FRACTION: f64 = 0.01;
/// White-patch channel means below this are treated as zero.
pub const MIN_WHITE_LEVEL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum WaterError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("depth map has {got} values, expected {expected}")]
    DepthSize { expected: usize, got: usize },
    #[error("invalid water properties: {0}")]
    InvalidProperties(String),
    #[error("t_min must be in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("depth range {min:.3}..{max:.3} m spans less than a factor of {MIN_DEPTH_RATIO}")]
    InsufficientDepthDiversity { min: f64, max: f64 },
    #[error("dark fraction must be in (0, 1], got {0}")]
    InvalidDarkFraction(f64),
    #[error("backscatter fit did not converge within {0} iterations")]
    Divergence(usize),
    #[error("attenuation fit for channel {0} is singular (need two distinct distances)")]
    SingularFit(usize),
    #[error("every observation was rejected for channel {0}")]
    AllRejected(usize),
    #[error("white patch is clipped ({0:.3} of pixels)")]
    ClippedWhite(f64),
    #[error("white patch channel {0} reads {1}, too dark to balance")]
    DarkWhite(usize, f64),
    #[error("white reflectance must be in (0, 1], got {0}")]
    InvalidReflectance(f64),
    #[error("invalid depth-bin override: {0}")]
    InvalidOverride(String),
}

/// Per-pixel camera-to-object distance in meters; non-positive or non-finite
/// values mark pixels without a distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    z: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, z: Vec<f64>) -> Result<Self, WaterError> {
        if z.len() != width * height {
            return Err(WaterError::DepthSize {
                expected: width * height,
                got: z.len(),
            });
        }
        Ok(Self { width, height, z })
    }

    pub fn uniform(width: usize, height: usize, z: f64) -> Self {
        Self {
            width,
            height,
            z: vec![z; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let z = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, z }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.z[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        valid_z(self.get(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.z.iter().filter(|z| valid_z(**z)).count()
    }

    /// Smallest and largest valid distance.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.z
            .iter()
            .copied()
            .filter(|z| valid_z(*z))
            .fold(None, |acc, z| match acc {
                None => Some((z, z)),
                Some((lo, hi)) => Some((lo.min(z), hi.max(z))),
            })
    }

    pub fn require_matches(&self, img: &LinearImage) -> Result<(), ImageError> {
        img.require_dims(self.width, self.height)
    }

    /// Median valid distance inside `[x0, x1) × [y0, y1)`.
    pub fn region_median(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Option<f64> {
        let mut v: Vec<f64> = (y0..y1.min(self.height))
            .flat_map(|y| (x0..x1.min(self.width)).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x, y))
            .filter(|z| valid_z(*z))
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

pub(crate) fn valid_z(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterProperties {
    #[serde(rename = "beta_D")]
    pub beta_d: [f64; 3],
    #[serde(rename = "beta_B")]
    pub beta_b: [f64; 3],
    #[serde(rename = "B_inf")]
    pub b_inf: [f64; 3],
}

impl WaterProperties {
    pub fn new(beta_d: [f64; 3], beta_b: [f64; 3], b_inf: [f64; 3]) -> Result<Self, WaterError> {
        let w = Self {
            beta_d,
            beta_b,
            b_inf,
        };
        w.validate()?;
        Ok(w)
    }

    /// Green-dominant coastal water used as the default synthetic scene.
    pub fn coastal() -> Self {
        Self {
            beta_d: [0.55, 0.25, 0.32],
            beta_b: [0.35, 0.25, 0.30],
            b_inf: [0.03, 0.10, 0.08],
        }
    }

    pub fn validate(&self) -> Result<(), WaterError> {
        let pos = |v: &[f64; 3]| v.iter().all(|b| b.is_finite() && *b > 0.0);
        if !pos(&self.beta_d) {
            return Err(WaterError::InvalidProperties(format!(
                "beta_D must be positive, got {:?}",
                self.beta_d
            )));
        }
        if !pos(&self.beta_b) {
            return Err(WaterError::InvalidProperties(format!(
                "beta_B must be positive, got {:?}",
                self.beta_b
            )));
        }
        if !self.b_inf.iter().all(|b| (0.0..=1.0).contains(b)) {
            return Err(WaterError::InvalidProperties(format!(
                "B_inf must lie in [0, 1], got {:?}",
                self.b_inf
            )));
        }
        Ok(())
    }

    pub fn transmission(&self, z: f64) -> [f64; 3] {
        self.beta_d.map(|b| (-b * z).exp())
    }

    pub fn backscatter(&self, z: f64) -> [f64; 3] {
        backscatter(&self.b_inf, &self.beta_b, z)
    }

    pub fn degrade_pixel(&self, j: [f64; 3], z: f64) -> [f64; 3] {
        let t = self.transmission(z);
        let b = self.backscatter(z);
        [0, 1, 2].map(|c| j[c] * t[c] + b[c])
    }
}

pub(crate) fn backscatter(b_inf: &[f64; 3], beta_b: &[f64; 3], z: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| b_inf[c] * -(-beta_b[c] * z).exp_m1())
}

/// A β_D override for distances in `[z_min, z_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBinOverride {
    pub z_min: f64,
    pub z_max: f64,
    #[serde(rename = "beta_D")]
    pub beta_d: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub pixels: usize,
    pub valid_pixels: usize,
    pub recoverable_pixels: usize,
    /// Recoverable share of the valid pixels (0 when none are valid).
    pub recoverable_fraction: f64,
    pub clamped_pixels: usize,
    pub t_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryDiagnostics {
    pub width: usize,
    pub height: usize,
    /// `exp(−β_D·z)` per pixel; 1 where the distance is invalid.
    pub transmission: Vec<[f64; 3]>,
    /// Minimum-channel transmission at or above `t_min` on a valid pixel.
    pub recoverable: Vec<bool>,
    /// Set where at least one recovered channel was clamped to [0, 1].
    pub clamped: Vec<bool>,
    pub summary: RecoverySummary,
}

fn check_t_min(t_min: f64) -> Result<(), WaterError> {
    if t_min > 0.0 && t_min < 1.0 {
        Ok(())
    } else {
        Err(WaterError::InvalidThreshold(t_min))
    }
}

fn diagnostics(
    z: &DepthMap,
    t_min: f64,
    beta_d_at: impl Fn(f64) -> [f64; 3],
    clamped: Vec<bool>,
) -> RecoveryDiagnostics {
    let n = z.values().len();
    let mut transmission = Vec::with_capacity(n);
    let mut recoverable = Vec::with_capacity(n);
    for &d in z.values() {
        if valid_z(d) {
            let t = beta_d_at(d).map(|b| (-b * d).exp());
            recoverable.push(t.iter().copied().fold(f64::INFINITY, f64::min) >= t_min);
            transmission.push(t);
        } else {
            recoverable.push(false);
            transmission.push([1.0; 3]);
        }
    }
    let valid_pixels = z.valid_count();
    let recoverable_pixels = recoverable.iter().filter(|r| **r).count();
    let clamped_pixels = clamped.iter().filter(|c| **c).count();
    RecoveryDiagnostics {
        width: z.width(),
        height: z.height(),
        transmission,
        recoverable,
        clamped,
        summary: RecoverySummary {
            pixels: n,
            valid_pixels,
            recoverable_pixels,
            recoverable_fraction: if valid_pixels == 0 {
                0.0
            } else {
                recoverable_pixels as f64 / valid_pixels as f64
            },
            clamped_pixels,
            t_min,
        },
    }
}

/// Transmission and recoverability flags without touching pixel data.
pub fn recoverability_map(
    z: &DepthMap,
    w: &WaterProperties,
    t_min: f64,
) -> Result<RecoveryDiagnostics, WaterError> {
    w.validate()?;
    check_t_min(t_min)?;
    Ok(diagnostics(z, t_min, |_| w.beta_d, vec![false; z.values().len()]))
}

/// Applies the water model to a clean image. Pixels without a valid distance
/// are copied through unchanged.
pub fn forward_degrade(
    j: &LinearImage,
    z: &DepthMap,
    w: &WaterProperties,
    policy: InputPolicy,
) -> Result<LinearImage, WaterError> {
    j.require_linear(policy)?;
    z.require_matches(j)?;
    w.validate()?;
    let mut out = j.clone();
    for (p, &d) in out.pixels_mut().iter_mut().zip(z.values()) {
        if valid_z(d) {
            *p = w.degrade_pixel(*p, d);
        }
    }
    Ok(out)
}

/// Inverts the water model. Recovered values are clamped to [0, 1] with the
/// clamp recorded; low-transmission pixels are emitted but flagged.
pub fn remove_water(
    i: &LinearImage,
    z: &DepthMap,
    w: &WaterProperties,
    t_min: f64,
    policy: InputPolicy,
) -> Result<(LinearImage, RecoveryDiagnostics), WaterError> {
    recover(i, z, w, t_min, policy, |_| w.beta_d)
}

/// [`remove_water`] with β_D replaced inside the given distance bins.
/// The first matching bin wins; distances outside every bin use `w.beta_d`.
pub fn remove_water_binned(
    i: &LinearImage,
    z: &DepthMap,
    w: &WaterProperties,
    bins: &[DepthBinOverride],
    t_min: f64,
    policy: InputPolicy,
) -> Result<(LinearImage, RecoveryDiagnostics), WaterError> {
    for b in bins {
        if !(b.z_min >= 0.0 && b.z_max > b.z_min) {
            return Err(WaterError::InvalidOverride(format!(
                "bin [{}, {}) is empty",
                b.z_min, b.z_max
            )));
        }
        if b.beta_d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(WaterError::InvalidOverride(format!(
                "beta_D must be positive, got {:?}",
                b.beta_d
            )));
        }
    }
    recover(i, z, w, t_min, policy, |d| {
        bins.iter()
            .find(|b| d >= b.z_min && d < b.z_max)
            .map_or(w.beta_d, |b| b.beta_d)
    })
}

fn recover(
    i: &LinearImage,
    z: &DepthMap,
    w: &WaterProperties,
    t_min: f64,
    policy: InputPolicy,
    beta_d_at: impl Fn(f64) -> [f64; 3],
) -> Result<(LinearImage, RecoveryDiagnostics), WaterError> {
    i.require_linear(policy)?;
    z.require_matches(i)?;
    w.validate()?;
    check_t_min(t_min)?;
    let mut out = i.clone();
    let mut clamped = vec![false; i.len()];
    for ((p, &d), flag) in out.pixels_mut().iter_mut().zip(z.values()).zip(&mut clamped) {
        if !valid_z(d) {
            continue;
        }
        let b = w.backscatter(d);
        let beta = beta_d_at(d);
        for c in 0..3 {
            let v = (p[c] - b[c]) * (beta[c] * d).exp();
            let cl = v.clamp(0.0, 1.0);
            *flag |= cl != v;
            p[c] = cl;
        }
    }
    let diag = diagnostics(z, t_min, beta_d_at, clamped);
    Ok((out, diag))
}

/// Per-channel gains `white_reflectance / mean_c` from a white-patch reading.
pub fn white_balance_gains(white: &PatchStat, white_reflectance: f64) -> Result<[f64; 3], WaterError> {
    if !(white_reflectance > 0.0 && white_reflectance <= 1.0) {
        return Err(WaterError::InvalidReflectance(white_reflectance));
    }
    if white.clipped_fraction > MAX_WHITE_CLIPPED_FRACTION || white.mean.iter().any(|m| *m >= CLIP_LEVEL)
    {
        return Err(WaterError::ClippedWhite(white.clipped_fraction));
    }
    for (c, &m) in white.mean.iter().enumerate() {
        if !(m > MIN_WHITE_LEVEL) {
            return Err(WaterError::DarkWhite(c, m));
        }
    }
    Ok(white.mean.map(|m| white_reflectance / m))
}

/// Global diagonal correction that maps the white patch to its reflectance.
/// Only meaningful at short, uniform distances.
pub fn closeup_white_balance(
    i: &LinearImage,
    white: &PatchStat,
    white_reflectance: f64,
    policy: InputPolicy,
) -> Result<(LinearImage, [f64; 3]), WaterError> {
    i.require_linear(policy)?;
    let g = white_balance_gains(white, white_reflectance)?;
    let out = i.map_pixels(|p| [0, 1, 2].map(|c| (p[c] * g[c]).clamp(0.0, 1.0)));
    Ok((out, g))
}
