//! Emulation of in-camera photofinishing.
//!
//! These stages exist to produce `processed` images on purpose, so the rest of
//! the toolkit can be tested against them. Outputs are always tagged
//! [`Encoding::Processed`], even for the identity profile.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Encoding, LinearImage};

#[derive(Debug, Error, PartialEq)]
pub enum IspError {
    #[error("invalid {stage} parameter: {message}")]
    InvalidParameter { stage: &'static str, message: String },
    #[error("unknown profile `{0}` (built-ins: neutral, vivid)")]
    UnknownProfile(String),
    #[error("cannot read profile {0}: {1}")]
    Read(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IspStage {
    WhiteBalance { gains: [f64; 3] },
    /// Sigmoid contrast around `pivot`; `contrast = 0` is the identity.
    ToneCurve { contrast: f64, pivot: f64 },
    GammaEncode { gamma: f64 },
    /// Mix away from (`factor > 1`) or toward the per-pixel channel mean.
    SaturationBoost { factor: f64 },
    Quantize { bits: u32 },
    /// Quantization without any curve: the stand-in for compression that
    /// keeps values proportional to exposure.
    LinearCompressQuantize { bits: u32 },
}

fn invalid(stage: &'static str, message: impl Into<String>) -> IspError {
    IspError::InvalidParameter {
        stage,
        message: message.into(),
    }
}

impl IspStage {
    pub fn name(&self) -> &'static str {
        match self {
            IspStage::WhiteBalance { .. } => "white_balance",
            IspStage::ToneCurve { .. } => "tone_curve",
            IspStage::GammaEncode { .. } => "gamma_encode",
            IspStage::SaturationBoost { .. } => "saturation_boost",
            IspStage::Quantize { .. } => "quantize",
            IspStage::LinearCompressQuantize { .. } => "linear_compress_quantize",
        }
    }

    pub fn validate(&self) -> Result<(), IspError> {
        let name = self.name();
        match *self {
            IspStage::WhiteBalance { gains } => {
                if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
                    return Err(invalid(name, format!("gains must be positive, got {gains:?}")));
                }
            }
            IspStage::ToneCurve { contrast, pivot } => {
                if !(contrast.is_finite() && contrast >= 0.0) {
                    return Err(invalid(name, format!("contrast must be >= 0, got {contrast}")));
                }
                if !(pivot > 0.0 && pivot < 1.0) {
                    return Err(invalid(name, format!("pivot must be in (0, 1), got {pivot}")));
                }
            }
            IspStage::GammaEncode { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(invalid(name, format!("gamma must be > 0, got {gamma}")));
                }
            }
            IspStage::SaturationBoost { factor } => {
                if !(factor.is_finite() && factor >= 0.0) {
                    return Err(invalid(name, format!("factor must be >= 0, got {factor}")));
                }
            }
            IspStage::Quantize { bits } | IspStage::LinearCompressQuantize { bits } => {
                if !(1..=16).contains(&bits) {
                    return Err(invalid(name, format!("bits must be in [1, 16], got {bits}")));
                }
            }
        }
        Ok(())
    }

    /// Applies the stage to one pixel. Inputs are clamped to the unit cube first.
    pub fn apply_pixel(&self, rgb: [f64; 3]) -> [f64; 3] {
        let v = rgb.map(|c| c.clamp(0.0, 1.0));
        match *self {
            IspStage::WhiteBalance { gains } => {
                [0, 1, 2].map(|c| (v[c] * gains[c]).clamp(0.0, 1.0))
            }
            IspStage::ToneCurve { contrast, pivot } => v.map(|c| tone(c, contrast, pivot)),
            IspStage::GammaEncode { gamma } => {
                if gamma == 1.0 {
                    v
                } else {
                    v.map(|c| c.powf(1.0 / gamma))
                }
            }
            IspStage::SaturationBoost { factor } => {
                if factor == 1.0 {
                    return v;
                }
                let m = (v[0] + v[1] + v[2]) / 3.0;
                v.map(|c| (m + factor * (c - m)).clamp(0.0, 1.0))
            }
            IspStage::Quantize { bits } | IspStage::LinearCompressQuantize { bits } => {
                v.map(|c| quantize(c, bits))
            }
        }
    }
}

/// Round-half-up onto `2^bits − 1` levels.
pub fn quantize(v: f64, bits: u32) -> f64 {
    let levels = ((1u32 << bits) - 1) as f64;
    (v.clamp(0.0, 1.0) * levels + 0.5).floor() / levels
}

/// `tanh` sigmoid around `pivot`, rescaled so 0 and 1 stay fixed.
fn tone(v: f64, contrast: f64, pivot: f64) -> f64 {
    if contrast == 0.0 {
        return v;
    }
    let s = |x: f64| (contrast * (x - pivot)).tanh();
    let (lo, hi) = (s(0.0), s(1.0));
    ((s(v) - lo) / (hi - lo)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IspProfile {
    pub name: String,
    pub stages: Vec<IspStage>,
}

impl IspProfile {
    pub fn neutral() -> Self {
        Self {
            name: "neutral".into(),
            stages: vec![],
        }
    }

    pub fn vivid() -> Self {
        Self {
            name: "vivid".into(),
            stages: vec![
                IspStage::WhiteBalance {
                    gains: [1.6, 1.0, 1.4],
                },
                IspStage::ToneCurve {
                    contrast: 2.0,
                    pivot: 0.4,
                },
                IspStage::SaturationBoost { factor: 1.3 },
                IspStage::GammaEncode { gamma: 2.2 },
                IspStage::Quantize { bits: 8 },
            ],
        }
    }

    pub fn builtin(name: &str) -> Result<Self, IspError> {
        match name {
            "neutral" => Ok(Self::neutral()),
            "vivid" => Ok(Self::vivid()),
            _ => Err(IspError::UnknownProfile(name.into())),
        }
    }

    pub fn validate(&self) -> Result<(), IspError> {
        self.stages.iter().try_for_each(IspStage::validate)
    }

    pub fn from_json(text: &str) -> Result<Self, IspError> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| IspError::Read("<json>".into(), e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// A built-in name, or a path to a JSON profile.
    pub fn resolve(spec: &str) -> Result<Self, IspError> {
        if let Ok(p) = Self::builtin(spec) {
            return Ok(p);
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(IspError::UnknownProfile(spec.into()));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| IspError::Read(spec.into(), e.to_string()))?;
        Self::from_json(&text).map_err(|e| match e {
            IspError::Read(_, m) => IspError::Read(spec.into(), m),
            other => other,
        })
    }

    pub fn apply_pixel(&self, rgb: [f64; 3]) -> [f64; 3] {
        self.stages
            .iter()
            .fold(rgb.map(|c| c.clamp(0.0, 1.0)), |v, s| s.apply_pixel(v))
    }
}

fn processed(mut img: LinearImage) -> LinearImage {
    img.state.encoding = Encoding::Processed;
    img
}

pub fn apply_stage(stage: &IspStage, img: &LinearImage) -> Result<LinearImage, IspError> {
    stage.validate()?;
    Ok(processed(img.map_pixels(|p| stage.apply_pixel(p))))
}

pub fn apply_profile(profile: &IspProfile, img: &LinearImage) -> Result<LinearImage, IspError> {
    profile.validate()?;
    Ok(processed(img.map_pixels(|p| profile.apply_pixel(p))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageState;
    use proptest::prelude::*;

    fn px(v: [f64; 3]) -> LinearImage {
        LinearImage::filled(1, 1, v, ImageState::CAMERA_LINEAR)
    }

    #[test]
    fn gamma_endpoints() {
        let g = IspStage::GammaEncode { gamma: 2.2 };
        assert_eq!(g.apply_pixel([0.0; 3]), [0.0; 3]);
        assert_eq!(g.apply_pixel([1.0; 3]), [1.0; 3]);
    }

    #[test]
    fn quantize_half() {
        assert_eq!(quantize(0.5, 8), 128.0 / 255.0);
        assert_eq!(quantize(0.0, 8), 0.0);
        assert_eq!(quantize(1.0, 1), 1.0);
    }

    #[test]
    fn stage_order_matters() {
        let wb = IspStage::WhiteBalance {
            gains: [2.0, 1.0, 1.0],
        };
        let g = IspStage::GammaEncode { gamma: 2.2 };
        let v = [0.25; 3];
        let a = g.apply_pixel(wb.apply_pixel(v));
        let b = wb.apply_pixel(g.apply_pixel(v));
        // WB then gamma: 0.5^(1/2.2); gamma then WB: 2·0.25^(1/2.2).
        assert!((a[0] - 0.5f64.powf(1.0 / 2.2)).abs() < 1e-15);
        assert!((b[0] - (2.0 * 0.25f64.powf(1.0 / 2.2)).min(1.0)).abs() < 1e-15);
        assert!((a[0] - b[0]).abs() > 0.2);
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn empty_profile_tags_processed() {
        let img = px([0.3, 0.4, 0.5]);
        let out = apply_profile(&IspProfile::neutral(), &img).unwrap();
        assert_eq!(out.pixels(), img.pixels());
        assert!(out.is_processed());
        assert_eq!(out.state.space, img.state.space);
    }

    #[test]
    fn identities() {
        let v = [0.1, 0.55, 0.93];
        assert_eq!(IspStage::ToneCurve { contrast: 0.0, pivot: 0.4 }.apply_pixel(v), v);
        assert_eq!(IspStage::SaturationBoost { factor: 1.0 }.apply_pixel(v), v);
        assert_eq!(IspStage::GammaEncode { gamma: 1.0 }.apply_pixel(v), v);
    }

    #[test]
    fn tone_curve_is_monotone_sigmoid() {
        let t = IspStage::ToneCurve {
            contrast: 2.0,
            pivot: 0.4,
        };
        let ys: Vec<f64> = (0..=100).map(|i| t.apply_pixel([i as f64 / 100.0; 3])[0]).collect();
        assert_eq!(ys[0], 0.0);
        assert!((ys[100] - 1.0).abs() < 1e-15);
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        // Steeper than identity at the pivot.
        assert!(ys[41] - ys[39] > 0.02);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(IspStage::Quantize { bits: 0 }.validate().is_err());
        assert!(IspStage::Quantize { bits: 17 }.validate().is_err());
        assert!(IspStage::ToneCurve { contrast: 1.0, pivot: 1.0 }.validate().is_err());
        assert!(IspStage::WhiteBalance { gains: [1.0, 0.0, 1.0] }.validate().is_err());
        assert!(IspStage::GammaEncode { gamma: -1.0 }.validate().is_err());
        assert!(IspProfile::builtin("sepia").is_err());
    }

    #[test]
    fn profile_json_round_trip() {
        let v = IspProfile::vivid();
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains(r#""type":"tone_curve""#));
        assert_eq!(IspProfile::from_json(&text).unwrap(), v);
        let custom = r#"{"name":"lj","stages":[{"type":"linear_compress_quantize","bits":12}]}"#;
        assert_eq!(
            IspProfile::from_json(custom).unwrap().stages,
            vec![IspStage::LinearCompressQuantize { bits: 12 }]
        );
    }

    fn any_stage() -> impl Strategy<Value = IspStage> {
        prop_oneof![
            prop::array::uniform3(0.01f64..5.0).prop_map(|gains| IspStage::WhiteBalance { gains }),
            (0.0f64..8.0, 0.01f64..0.99)
                .prop_map(|(contrast, pivot)| IspStage::ToneCurve { contrast, pivot }),
            (0.05f64..5.0).prop_map(|gamma| IspStage::GammaEncode { gamma }),
            (0.0f64..4.0).prop_map(|factor| IspStage::SaturationBoost { factor }),
            (1u32..=16).prop_map(|bits| IspStage::Quantize { bits }),
            (1u32..=16).prop_map(|bits| IspStage::LinearCompressQuantize { bits }),
        ]
    }

    proptest! {
        #[test]
        fn stages_stay_in_unit_cube(stage in any_stage(), v in prop::array::uniform3(0.0f64..=1.0)) {
            let out = stage.apply_pixel(v);
            prop_assert!(out.iter().all(|c| (0.0..=1.0).contains(c)));
        }

        #[test]
        fn linear_quantize_commutes_with_scale(bits in 1u32..=16, v in 0.0f64..=1.0, a in 0.0f64..=1.0) {
            let step = 1.0 / ((1u32 << bits) - 1) as f64;
            let q = IspStage::LinearCompressQuantize { bits };
            let lhs = q.apply_pixel([a * v; 3])[0];
            let rhs = a * q.apply_pixel([v; 3])[0];
            prop_assert!((lhs - rhs).abs() <= step + 1e-12);
        }
    }
}
