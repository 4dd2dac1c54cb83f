use super::{integrate_product, standard_grid, Spectrum, SpectrumError, SpectrumKind};

pub const CHANNEL_NAMES: [&str; 3] = ["r", "g", "b"];

/// A camera described by the spectral sensitivity of its three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub name: String,
    channels: [Spectrum; 3],
}

impl CameraModel {
    pub fn new(name: impl Into<String>, channels: [Spectrum; 3]) -> Result<Self, SpectrumError> {
        for (label, s) in CHANNEL_NAMES.iter().zip(&channels) {
            s.expect_kind(SpectrumKind::Sensitivity)?;
            if s.values().iter().all(|&v| v == 0.0) {
                return Err(SpectrumError::Camera(format!(
                    "channel {label} sensitivity is identically zero"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            channels,
        })
    }

    /// A camera with Gaussian channel sensitivities, `(peak_nm, sigma_nm)` per channel.
    pub fn gaussian(name: impl Into<String>, params: [(f64, f64); 3]) -> Result<Self, SpectrumError> {
        let grid: Vec<f64> = (0..=90).map(|i| 380.0 + 5.0 * i as f64).collect();
        let mk = |(mu, sigma): (f64, f64)| {
            Spectrum::from_fn(&grid, SpectrumKind::Sensitivity, |l| {
                (-0.5 * ((l - mu) / sigma).powi(2)).exp()
            })
        };
        Self::new(name, [mk(params[0])?, mk(params[1])?, mk(params[2])?])
    }

    pub fn channels(&self) -> &[Spectrum; 3] {
        &self.channels
    }

    /// Unclipped channel responses to `reflectance` under `illuminant` at unit exposure.
    pub fn response(&self, reflectance: &Spectrum, illuminant: &Spectrum) -> [f64; 3] {
        let r = reflectance.to_standard_grid();
        let e = illuminant.to_standard_grid();
        let mut out = [0.0; 3];
        for (o, s) in out.iter_mut().zip(&self.channels) {
            let s = s.resample(&standard_grid()).expect("standard grid is valid");
            *o = integrate_product(&s, &e, &r).expect("common grid");
        }
        out
    }

    /// Exposure that puts the brightest channel of a perfect reflector at `level`.
    pub fn exposure_for_white(&self, illuminant: &Spectrum, level: f64) -> f64 {
        let white = Spectrum::constant(1.0, SpectrumKind::Reflectance).expect("valid");
        let rgb = self.response(&white, illuminant);
        level / rgb.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// One surface under one light at one relative exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub reflectance: Spectrum,
    pub illuminant: Spectrum,
    pub exposure_k: f64,
}

impl SceneSample {
    pub fn new(
        reflectance: Spectrum,
        illuminant: Spectrum,
        exposure_k: f64,
    ) -> Result<Self, SpectrumError> {
        reflectance.expect_kind(SpectrumKind::Reflectance)?;
        illuminant.expect_kind(SpectrumKind::Illuminant)?;
        if !(exposure_k.is_finite() && exposure_k > 0.0) {
            return Err(SpectrumError::Exposure(exposure_k));
        }
        Ok(Self {
            reflectance,
            illuminant,
            exposure_k,
        })
    }
}

/// Simulated RAW values for one scene sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRgb {
    /// Values clipped to `[0, 1]`.
    pub rgb: [f64; 3],
    /// Values before clipping, for fitting paths that must not see clipping.
    pub unclipped: [f64; 3],
    pub clipped: bool,
}

/// `ρ_c = k ∫ S_c(λ) E(λ) R(λ) dλ` per channel.
pub fn simulate_raw_rgb(scene: &SceneSample, camera: &CameraModel) -> RawRgb {
    let resp = camera.response(&scene.reflectance, &scene.illuminant);
    let unclipped = resp.map(|v| scene.exposure_k * v);
    let clipped = unclipped.iter().any(|&v| v > 1.0);
    RawRgb {
        rgb: unclipped.map(|v| v.clamp(0.0, 1.0)),
        unclipped,
        clipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn camera() -> CameraModel {
        CameraModel::gaussian("test", [(600.0, 35.0), (540.0, 40.0), (455.0, 30.0)]).unwrap()
    }

    fn flat(v: f64, kind: SpectrumKind) -> Spectrum {
        Spectrum::constant(v, kind).unwrap()
    }

    #[test]
    fn zero_reflectance_gives_black() {
        let scene = SceneSample::new(
            flat(0.0, SpectrumKind::Reflectance),
            flat(1.0, SpectrumKind::Illuminant),
            0.01,
        )
        .unwrap();
        assert_eq!(simulate_raw_rgb(&scene, &camera()).rgb, [0.0; 3]);
    }

    #[test]
    fn doubling_exposure_doubles_output() {
        let cam = camera();
        let mk = |k| {
            SceneSample::new(
                flat(0.4, SpectrumKind::Reflectance),
                flat(1.0, SpectrumKind::Illuminant),
                k,
            )
            .unwrap()
        };
        let a = simulate_raw_rgb(&mk(1e-3), &cam).unclipped;
        let b = simulate_raw_rgb(&mk(2e-3), &cam).unclipped;
        for c in 0..3 {
            assert_relative_eq!(b[c], 2.0 * a[c], max_relative = 1e-14);
        }
    }

    #[test]
    fn clipping_is_flagged() {
        let scene = SceneSample::new(
            flat(1.0, SpectrumKind::Reflectance),
            flat(1.0, SpectrumKind::Illuminant),
            1.0,
        )
        .unwrap();
        let out = simulate_raw_rgb(&scene, &camera());
        assert!(out.clipped);
        assert_eq!(out.rgb, [1.0; 3]);
        assert!(out.unclipped[0] > 1.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            SceneSample::new(
                flat(0.5, SpectrumKind::Reflectance),
                flat(1.0, SpectrumKind::Illuminant),
                0.0
            ),
            Err(SpectrumError::Exposure(_))
        ));
        let zero = flat(0.0, SpectrumKind::Sensitivity);
        let one = flat(1.0, SpectrumKind::Sensitivity);
        assert!(matches!(
            CameraModel::new("x", [one.clone(), zero, one]),
            Err(SpectrumError::Camera(_))
        ));
    }

    #[test]
    fn exposure_for_white_hits_level() {
        let cam = camera();
        let e = flat(1.0, SpectrumKind::Illuminant);
        let k = cam.exposure_for_white(&e, 0.8);
        let scene = SceneSample::new(flat(1.0, SpectrumKind::Reflectance), e, k).unwrap();
        let rgb = simulate_raw_rgb(&scene, &cam).rgb;
        assert_relative_eq!(rgb.iter().cloned().fold(0.0, f64::max), 0.8, epsilon = 1e-12);
    }
}
