//! Water-parameter estimation from a single image plus depth map.

use serde::{Deserialize, Serialize};

use super::solver::{fit_saturating_exponential, MAX_ITERATIONS};
use super::{backscatter, valid_z, DepthMap, WaterError};
use crate::image::{InputPolicy, LinearImage};

pub const DEFAULT_DARK_FRACTION: f64 = 0.01;
pub const DEPTH_BINS: usize = 10;
/// The valid depth range must span at least this ratio.
pub const MIN_DEPTH_RATIO: f64 = 3.0;

const B_INF_BOUNDS: (f64, f64) = (0.0, 1.0);
const BETA_BOUNDS: (f64, f64) = (1e-4, 20.0);
const FALLBACK_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackscatterOptions {
    pub dark_fraction: f64,
    pub bins: usize,
}

impl Default for BackscatterOptions {
    fn default() -> Self {
        Self {
            dark_fraction: DEFAULT_DARK_FRACTION,
            bins: DEPTH_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackscatterFit {
    #[serde(rename = "B_inf")]
    pub b_inf: [f64; 3],
    #[serde(rename = "beta_B")]
    pub beta_b: [f64; 3],
    /// RMS residual over every dark sample and channel.
    pub rms_residual: f64,
    pub channel_rms: [f64; 3],
    pub iterations: [usize; 3],
    pub samples: usize,
    pub bins_used: usize,
    pub depth_range: (f64, f64),
}

/// Darkest pixels (by channel sum) in each of `bins` equal-width depth bins.
fn dark_samples(
    img: &LinearImage,
    z: &DepthMap,
    opts: &BackscatterOptions,
    (zmin, zmax): (f64, f64),
) -> (Vec<(f64, [f64; 3])>, usize) {
    let mut bins: Vec<Vec<(f64, usize)>> = vec![Vec::new(); opts.bins];
    let width = zmax - zmin;
    for (i, (&d, p)) in z.values().iter().zip(img.pixels()).enumerate() {
        if !valid_z(d) {
            continue;
        }
        let k = (((d - zmin) / width * opts.bins as f64) as usize).min(opts.bins - 1);
        bins[k].push((p[0] + p[1] + p[2], i));
    }
    let mut samples = Vec::new();
    let mut used = 0;
    for mut bin in bins.into_iter().filter(|b| !b.is_empty()) {
        used += 1;
        bin.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let take = ((opts.dark_fraction * bin.len() as f64).ceil() as usize).clamp(1, bin.len());
        samples.extend(bin[..take].iter().map(|&(_, i)| (z.values()[i], img.pixels()[i])));
    }
    (samples, used)
}

/// Fits `B∞` and `β_B` per channel to the darkest pixels across depth.
///
/// The darkest pixels at each distance are assumed to carry no direct signal,
/// so they sample the backscatter curve alone.
pub fn estimate_backscatter(
    img: &LinearImage,
    z: &DepthMap,
    opts: &BackscatterOptions,
    policy: InputPolicy,
) -> Result<BackscatterFit, WaterError> {
    img.require_linear(policy)?;
    z.require_matches(img)?;
    if !(opts.dark_fraction > 0.0 && opts.dark_fraction <= 1.0) {
        return Err(WaterError::InvalidDarkFraction(opts.dark_fraction));
    }
    let (zmin, zmax) = z
        .valid_range()
        .ok_or(WaterError::InsufficientDepthDiversity { min: 0.0, max: 0.0 })?;
    if zmax < MIN_DEPTH_RATIO * zmin || opts.bins < 2 {
        return Err(WaterError::InsufficientDepthDiversity { min: zmin, max: zmax });
    }
    let (samples, bins_used) = dark_samples(img, z, opts, (zmin, zmax));
    if bins_used < 3 {
        return Err(WaterError::InsufficientDepthDiversity { min: zmin, max: zmax });
    }
    let zs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let far = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let mut fit = BackscatterFit {
        b_inf: [0.0; 3],
        beta_b: [0.0; 3],
        rms_residual: 0.0,
        channel_rms: [0.0; 3],
        iterations: [0; 3],
        samples: samples.len(),
        bins_used,
        depth_range: (zmin, zmax),
    };
    for c in 0..3 {
        let ys: Vec<f64> = samples.iter().map(|s| s.1[c]).collect();
        // Veiling color from the far field, slightly inflated so the log-linear
        // initialization stays defined.
        let far_level = samples
            .iter()
            .filter(|s| s.0 >= zmin + (far - zmin) * (1.0 - 1.0 / opts.bins as f64))
            .map(|s| s.1[c])
            .fold(0.0, f64::max);
        let b0 = (far_level * 1.05).min(B_INF_BOUNDS.1);
        let (mut num, mut den) = (0.0, 0.0);
        if b0 > 0.0 {
            for (&zi, &yi) in zs.iter().zip(&ys) {
                if yi < b0 {
                    num += zi * (1.0 - yi / b0).ln();
                    den += zi * zi;
                }
            }
        }
        let beta0 = if den > 0.0 && num < 0.0 {
            -num / den
        } else {
            FALLBACK_BETA
        };
        let r = fit_saturating_exponential(&zs, &ys, (b0, beta0), B_INF_BOUNDS, BETA_BOUNDS);
        if !r.converged {
            return Err(WaterError::Divergence(MAX_ITERATIONS));
        }
        fit.b_inf[c] = r.a;
        fit.beta_b[c] = r.b;
        fit.channel_rms[c] = r.rms;
        fit.iterations[c] = r.iterations;
    }
    fit.rms_residual = (fit.channel_rms.iter().map(|r| r * r).sum::<f64>() / 3.0).sqrt();
    Ok(fit)
}

/// A white-patch reading at distance `z`, with the same patch seen at
/// `reference_z` (0 for an in-air capture).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationObservation {
    pub rgb: [f64; 3],
    pub z: f64,
    pub reference: [f64; 3],
    #[serde(default)]
    pub reference_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationFit {
    #[serde(rename = "beta_D")]
    pub beta_d: [f64; 3],
    pub used: [usize; 3],
    /// `(observation index, channel)` pairs excluded by the backscatter floor.
    pub rejected: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

/// Per channel, fits `log(D(z)/D(z_ref)) = −β_D·(z − z_ref)` through the
/// origin, where `D` is the backscatter-subtracted signal.
pub fn estimate_attenuation(
    observations: &[AttenuationObservation],
    beta_b: [f64; 3],
    b_inf: [f64; 3],
) -> Result<AttenuationFit, WaterError> {
    let mut fit = AttenuationFit {
        beta_d: [0.0; 3],
        used: [0; 3],
        rejected: Vec::new(),
        warnings: Vec::new(),
    };
    for c in 0..3 {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (i, o) in observations.iter().enumerate() {
            let d = o.rgb[c] - backscatter(&b_inf, &beta_b, o.z)[c];
            let d_ref = o.reference[c] - backscatter(&b_inf, &beta_b, o.reference_z.max(0.0))[c];
            if !valid_z(o.z) || d <= 0.0 || d_ref <= 0.0 {
                fit.rejected.push((i, c));
                fit.warnings.push(format!(
                    "observation {i} (z = {:.3} m) channel {c}: signal {:.6} at or below the backscatter floor, excluded",
                    o.z, o.rgb[c]
                ));
                continue;
            }
            pts.push((o.z - o.reference_z, (d / d_ref).ln()));
        }
        if pts.is_empty() {
            return Err(WaterError::AllRejected(c));
        }
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        if xs.len() < 2 || sxx == 0.0 {
            return Err(WaterError::SingularFit(c));
        }
        let beta = -pts.iter().map(|p| p.0 * p.1).sum::<f64>() / sxx;
        if beta <= 0.0 {
            fit.warnings
                .push(format!("channel {c}: fitted beta_D {beta:.6} is not positive"));
        }
        fit.beta_d[c] = beta;
        fit.used[c] = pts.len();
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageState;
    use crate::water::{forward_degrade, WaterProperties};

    /// Every third pixel is black; depth ramps from 0.5 to 15 m.
    fn ramp_scene(w: &WaterProperties) -> (LinearImage, DepthMap) {
        let (width, height) = (300, 10);
        let z = DepthMap::from_fn(width, height, |x, _| 0.5 + 14.5 * x as f64 / (width - 1) as f64);
        let pixels = (0..width * height)
            .map(|i| if i % 3 == 0 { [0.0; 3] } else { [0.6, 0.5, 0.4] })
            .collect();
        let j = LinearImage::from_pixels(width, height, pixels, ImageState::CAMERA_LINEAR).unwrap();
        (forward_degrade(&j, &z, w, Default::default()).unwrap(), z)
    }

    #[test]
    fn backscatter_from_black_pixels() {
        let w = WaterProperties::coastal();
        let (img, z) = ramp_scene(&w);
        let fit = estimate_backscatter(&img, &z, &Default::default(), Default::default()).unwrap();
        for c in 0..3 {
            assert!((fit.b_inf[c] - w.b_inf[c]).abs() / w.b_inf[c] < 1e-6, "{fit:?}");
            assert!((fit.beta_b[c] - w.beta_b[c]).abs() / w.beta_b[c] < 1e-6, "{fit:?}");
        }
        assert!(fit.rms_residual < 1e-9);
        assert_eq!(fit.bins_used, DEPTH_BINS);
    }

    #[test]
    fn zero_backscatter() {
        let w = WaterProperties {
            b_inf: [0.0; 3],
            ..WaterProperties::coastal()
        };
        let (img, z) = ramp_scene(&w);
        let fit = estimate_backscatter(&img, &z, &Default::default(), Default::default()).unwrap();
        assert!(fit.b_inf.iter().all(|b| *b < 1e-3), "{fit:?}");
    }

    #[test]
    fn constant_depth_rejected() {
        let img = LinearImage::filled(4, 4, [0.1; 3], ImageState::CAMERA_LINEAR);
        let err = estimate_backscatter(&img, &DepthMap::uniform(4, 4, 2.0), &Default::default(), Default::default())
            .unwrap_err();
        assert!(matches!(err, WaterError::InsufficientDepthDiversity { .. }));
    }

    fn obs(w: &WaterProperties, j: [f64; 3], z: f64) -> AttenuationObservation {
        AttenuationObservation {
            rgb: w.degrade_pixel(j, z),
            z,
            reference: j,
            reference_z: 0.0,
        }
    }

    #[test]
    fn attenuation_exact() {
        let w = WaterProperties::coastal();
        let j = [0.7, 0.72, 0.68];
        let o: Vec<_> = [0.5, 1.0, 2.0, 4.0].iter().map(|&z| obs(&w, j, z)).collect();
        let fit = estimate_attenuation(&o, w.beta_b, w.b_inf).unwrap();
        for c in 0..3 {
            assert!((fit.beta_d[c] - w.beta_d[c]).abs() < 1e-6);
        }
        assert!(fit.warnings.is_empty());
        assert_eq!(fit.used, [4; 3]);
    }

    #[test]
    fn attenuation_with_underwater_reference() {
        let w = WaterProperties::coastal();
        let j = [0.7, 0.72, 0.68];
        let r = obs(&w, j, 0.3);
        let o: Vec<_> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&z| AttenuationObservation {
                reference: r.rgb,
                reference_z: 0.3,
                ..obs(&w, j, z)
            })
            .collect();
        let fit = estimate_attenuation(&o, w.beta_b, w.b_inf).unwrap();
        for c in 0..3 {
            assert!((fit.beta_d[c] - w.beta_d[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_distances_are_singular() {
        let w = WaterProperties::coastal();
        let o = [obs(&w, [0.5; 3], 2.0), obs(&w, [0.5; 3], 2.0)];
        assert_eq!(estimate_attenuation(&o, w.beta_b, w.b_inf), Err(WaterError::SingularFit(0)));
    }

    #[test]
    fn floor_rejection_warns() {
        let w = WaterProperties::coastal();
        let j = [0.6; 3];
        let mut o: Vec<_> = [0.5, 1.0, 2.0].iter().map(|&z| obs(&w, j, z)).collect();
        let mut low = obs(&w, j, 3.0);
        low.rgb[0] = w.backscatter(3.0)[0] * 0.9;
        o.push(low);
        let fit = estimate_attenuation(&o, w.beta_b, w.b_inf).unwrap();
        assert_eq!(fit.rejected, vec![(3, 0)]);
        assert_eq!(fit.warnings.len(), 1);
        assert_eq!(fit.used, [3, 4, 4]);
        assert!((fit.beta_d[0] - w.beta_d[0]).abs() < 1e-9);

        let all_low: Vec<_> = o.iter().map(|x| AttenuationObservation { rgb: [0.0; 3], ..*x }).collect();
        assert_eq!(estimate_attenuation(&all_low, w.beta_b, w.b_inf), Err(WaterError::AllRejected(0)));
    }
}
