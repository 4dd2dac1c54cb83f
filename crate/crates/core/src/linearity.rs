//! Radiometric linearity verification from the achromatic patches of a
//! calibrated chart, or from an exposure series.
//!
//! Each channel gets an ordinary least-squares line. The verdict additionally
//! compares every point with the through-origin fit `y = k·x`, since a linear
//! sensor must be proportional, not merely affine.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{ChartRecord, PatchStats, ReflectanceSource, CLIP_LEVEL};
use crate::spectral::{CameraModel, Spectrum};

/// Achromatic patches above this clipped fraction make the check invalid.
pub const MAX_CLIPPED_FRACTION: f64 = 0.01;
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum LinearityError {
    #[error("need at least {MIN_POINTS} achromatic patches (distinct exposures), got {0}")]
    TooFewPoints(usize),
    #[error("patch `{0}` is clipped ({1:.3} of pixels)")]
    ClippedPatch(String, f64),
    #[error("value {1} at exposure {0} is clipped")]
    ClippedValue(f64, f64),
    #[error("abscissa has zero variance")]
    ZeroVariance,
    #[error("achromatic patch `{0}` was not measured")]
    MissingPatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityThresholds {
    pub min_r_squared: f64,
    pub max_abs_intercept: f64,
    pub max_relative_deviation: f64,
}

impl Default for LinearityThresholds {
    fn default() -> Self {
        Self {
            min_r_squared: 0.995,
            max_abs_intercept: 0.02,
            max_relative_deviation: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Slope of the through-origin fit.
    pub proportional_slope: f64,
    /// `max |y − k·x| / (k·x)` over points with `x > 0`.
    pub max_relative_deviation: f64,
}

impl ChannelFit {
    pub fn passes(&self, t: &LinearityThresholds) -> bool {
        self.r_squared >= t.min_r_squared
            && self.intercept.abs() <= t.max_abs_intercept
            && self.max_relative_deviation <= t.max_relative_deviation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    /// Mean reflectance over the internal grid (spectrally flat patches only).
    GridMeanReflectance,
    /// Simulated channel response from camera sensitivities and illuminant.
    SimulatedResponse,
    Exposure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityPoint {
    pub label: String,
    pub abscissa: [f64; 3],
    pub value: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub channels: Vec<ChannelFit>,
    pub verdict: Verdict,
    pub abscissa: Abscissa,
    pub points: Vec<LinearityPoint>,
    pub thresholds: LinearityThresholds,
    pub reflectance_source: Option<ReflectanceSource>,
    pub warnings: Vec<String>,
}

/// OLS line plus proportional-fit deviation for one channel.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<ChannelFit, LinearityError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * xs.iter().map(|x| x * x).sum::<f64>() {
        return Err(LinearityError::ZeroVariance);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proportional_slope =
        xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let max_relative_deviation = if proportional_slope > 0.0 {
        xs.iter()
            .zip(ys)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| (y - proportional_slope * x).abs() / (proportional_slope * x))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    Ok(ChannelFit {
        slope,
        intercept,
        r_squared,
        proportional_slope,
        max_relative_deviation,
    })
}

fn verdict(channels: &[ChannelFit], t: &LinearityThresholds) -> Verdict {
    if channels.iter().all(|c| c.passes(t)) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Fits pixel value against expected relative response for every achromatic
/// patch of `chart` found in `stats`.
///
/// Without a camera the abscissa is the patch's mean reflectance; with one it
/// is the simulated channel response under `illuminant`.
pub fn fit_linearity(
    stats: &PatchStats,
    chart: &ChartRecord,
    illuminant: &Spectrum,
    camera: Option<&CameraModel>,
    thresholds: LinearityThresholds,
) -> Result<LinearityReport, LinearityError> {
    let mut points = Vec::new();
    for patch in chart.achromatic() {
        let Some(stat) = stats.get(&patch.name) else {
            continue;
        };
        if stat.clipped_fraction > MAX_CLIPPED_FRACTION {
            return Err(LinearityError::ClippedPatch(
                patch.name.clone(),
                stat.clipped_fraction,
            ));
        }
        let abscissa = match camera {
            Some(cam) => cam.response(&patch.reflectance, illuminant),
            None => [patch.reflectance.grid_mean(); 3],
        };
        points.push(LinearityPoint {
            label: patch.name.clone(),
            abscissa,
            value: stat.mean,
        });
    }
    if points.len() < MIN_POINTS {
        return Err(LinearityError::TooFewPoints(points.len()));
    }
    let channels = (0..3)
        .map(|c| {
            let xs: Vec<f64> = points.iter().map(|p| p.abscissa[c]).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.value[c]).collect();
            fit_line(&xs, &ys)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut warnings = Vec::new();
    if chart.reflectance_source != ReflectanceSource::Measured {
        warnings.push(format!(
            "chart `{}` reflectances are {:?}, not measured; measured values take precedence when available",
            chart.chart_id, chart.reflectance_source
        ));
    }
    Ok(LinearityReport {
        verdict: verdict(&channels, &thresholds),
        channels,
        abscissa: if camera.is_some() {
            Abscissa::SimulatedResponse
        } else {
            Abscissa::GridMeanReflectance
        },
        points,
        thresholds,
        reflectance_source: Some(chart.reflectance_source),
        warnings,
    })
}

/// Single-channel check from `(exposure, value)` pairs.
pub fn linearity_from_exposure_series(
    values: &[(f64, f64)],
    thresholds: LinearityThresholds,
) -> Result<LinearityReport, LinearityError> {
    if let Some(&(k, v)) = values.iter().find(|(_, v)| *v >= CLIP_LEVEL) {
        return Err(LinearityError::ClippedValue(k, v));
    }
    let mut distinct: Vec<f64> = values.iter().map(|(k, _)| *k).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < MIN_POINTS {
        return Err(LinearityError::TooFewPoints(distinct.len()));
    }
    let xs: Vec<f64> = values.iter().map(|(k, _)| *k).collect();
    let ys: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    let fit = fit_line(&xs, &ys)?;
    Ok(LinearityReport {
        verdict: verdict(&[fit], &thresholds),
        channels: vec![fit],
        abscissa: Abscissa::Exposure,
        points: values
            .iter()
            .map(|&(k, v)| LinearityPoint {
                label: format!("k={k}"),
                abscissa: [k; 3],
                value: [v; 3],
            })
            .collect(),
        thresholds,
        reflectance_source: None,
        warnings: vec![],
    })
}

impl LinearityReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:>10} {:>10} {:>10} {:>10}",
            "channel", "slope", "intercept", "r2", "max_dev"
        );
        let names = if self.channels.len() == 1 {
            vec!["value"]
        } else {
            vec!["r", "g", "b"]
        };
        for (name, c) in names.iter().zip(&self.channels) {
            let _ = writeln!(
                s,
                "{:<8} {:>10.5} {:>10.5} {:>10.6} {:>10.4}",
                name, c.slope, c.intercept, c.r_squared, c.max_relative_deviation
            );
        }
        let _ = writeln!(
            s,
            "verdict: {} (r2 >= {}, |intercept| <= {}, max_dev <= {})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.thresholds.min_r_squared,
            self.thresholds.max_abs_intercept,
            self.thresholds.max_relative_deviation
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    /// Scatter of pixel value against abscissa with each channel's
    /// proportional fit.
    pub fn to_svg(&self) -> String {
        const W: f64 = 480.0;
        const H: f64 = 360.0;
        const PAD: f64 = 48.0;
        let colors = ["#d62728", "#2ca02c", "#1f77b4"];
        let xmax = self
            .points
            .iter()
            .flat_map(|p| p.abscissa)
            .fold(0.0, f64::max)
            .max(1e-12);
        let ymax = self
            .points
            .iter()
            .flat_map(|p| p.value)
            .fold(0.0, f64::max)
            .max(1e-12);
        let px = |x: f64| PAD + x / xmax * (W - 2.0 * PAD);
        let py = |y: f64| H - PAD - y / ymax * (H - 2.0 * PAD);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<path d="M{PAD} {} H{} M{PAD} {} V{PAD}" stroke="black" fill="none"/>"#,
            H - PAD,
            W - PAD,
            H - PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{:?}</text>"#,
            W / 2.0,
            H - 12.0,
            self.abscissa
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">pixel value</text>"#,
            H / 2.0,
            H / 2.0
        );
        for (c, fit) in self.channels.iter().enumerate() {
            let color = colors[c % 3];
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-dasharray="4 3"/>"#,
                px(0.0),
                py(0.0),
                px(xmax),
                py(fit.proportional_slope * xmax)
            );
            for p in &self.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"><title>{}</title></circle>"#,
                    px(p.abscissa[c]),
                    py(p.value[c]),
                    p.label
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" font-size="14" text-anchor="end">{}</text>"#,
            W - PAD,
            if self.passed() { "linear: PASS" } else { "linear: FAIL" }
        );
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::chart::PatchStat;
    use proptest::prelude::*;

    const GRAYS: [f64; 6] = [0.9, 0.59, 0.36, 0.2, 0.09, 0.03];

    fn stats_from(chart: &ChartRecord, f: impl Fn(f64) -> f64) -> PatchStats {
        PatchStats {
            patches: chart
                .achromatic()
                .map(|p| {
                    let v = f(p.reflectance.grid_mean());
                    PatchStat {
                        name: p.name.clone(),
                        mean: [v; 3],
                        std: [0.0; 3],
                        pixel_count: 100,
                        clipped_fraction: 0.0,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn exact_proportionality_passes() {
        let chart = assets::reference_chart("T");
        let stats = stats_from(&chart, |r| 0.9 * r);
        let rep = fit_linearity(&stats, &chart, &assets::d65(), None, Default::default()).unwrap();
        assert!(rep.passed());
        for c in &rep.channels {
            assert!((c.slope - 0.9).abs() < 1e-12);
            assert!(c.intercept.abs() < 1e-12);
            assert!((c.r_squared - 1.0).abs() < 1e-12);
        }
        assert_eq!(rep.abscissa, Abscissa::GridMeanReflectance);
        assert!(!rep.warnings.is_empty(), "nominal reflectances are flagged");
    }

    #[test]
    fn gamma_encoded_grays_fail() {
        // Oracle: direct least squares on the six analytic points.
        let xs = GRAYS.to_vec();
        let ys: Vec<f64> = xs.iter().map(|r: &f64| r.powf(1.0 / 2.2)).collect();
        let k0 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>()
            / xs.iter().map(|x| x * x).sum::<f64>();
        let dev = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - k0 * x).abs() / (k0 * x))
            .fold(0.0, f64::max);
        assert!(dev > 0.3);
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.max_relative_deviation - dev).abs() < 1e-12);
        assert!(!fit.passes(&LinearityThresholds::default()));
    }

    #[test]
    fn camera_abscissa() {
        let chart = assets::reference_chart("T");
        let cam = assets::synthetic_camera();
        let d65 = assets::d65();
        let k = cam.exposure_for_white(&d65, 0.8);
        let stats = PatchStats {
            patches: chart
                .achromatic()
                .map(|p| PatchStat {
                    name: p.name.clone(),
                    mean: cam.response(&p.reflectance, &d65).map(|v| v * k),
                    std: [0.0; 3],
                    pixel_count: 10,
                    clipped_fraction: 0.0,
                })
                .collect(),
        };
        let rep = fit_linearity(&stats, &chart, &d65, Some(&cam), Default::default()).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.abscissa, Abscissa::SimulatedResponse);
        assert!((rep.channels[0].slope - k).abs() < 1e-12 * k.max(1.0) * 1e3);
    }

    #[test]
    fn too_few_patches() {
        let chart = assets::reference_chart("T");
        let mut stats = stats_from(&chart, |r| r);
        stats.patches.truncate(2);
        assert_eq!(
            fit_linearity(&stats, &chart, &assets::d65(), None, Default::default()),
            Err(LinearityError::TooFewPoints(2))
        );
    }

    #[test]
    fn clipped_white_errors() {
        let chart = assets::reference_chart("T");
        let mut stats = stats_from(&chart, |r| r);
        stats.patches[0].clipped_fraction = 0.2;
        assert!(matches!(
            fit_linearity(&stats, &chart, &assets::d65(), None, Default::default()),
            Err(LinearityError::ClippedPatch(..))
        ));
    }

    #[test]
    fn exposure_series() {
        let t = LinearityThresholds::default();
        let rep = linearity_from_exposure_series(&[(1.0, 0.2), (2.0, 0.4), (3.0, 0.6)], t).unwrap();
        assert!(rep.passed());
        assert!((rep.channels[0].slope - 0.2).abs() < 1e-12);

        // Oracle: k0 = Σxy/Σx² = 2.52/14 = 0.18; the first point deviates by 0.2/0.18 − 1 ≈ 0.111.
        let rep = linearity_from_exposure_series(&[(1.0, 0.2), (2.0, 0.38), (3.0, 0.52)], t).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert!((rep.channels[0].proportional_slope - 0.18).abs() < 1e-12);
        assert!((rep.channels[0].max_relative_deviation - (0.2 / 0.18 - 1.0)).abs() < 1e-12);

        assert!(matches!(
            linearity_from_exposure_series(&[(1.0, 0.6), (2.0, 1.0)], t),
            Err(LinearityError::ClippedValue(..))
        ));
        assert_eq!(
            linearity_from_exposure_series(&[(1.0, 0.2), (1.0, 0.2), (2.0, 0.4)], t),
            Err(LinearityError::TooFewPoints(2))
        );
    }

    #[test]
    fn zero_variance_abscissa() {
        assert_eq!(
            fit_line(&[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3]),
            Err(LinearityError::ZeroVariance)
        );
    }

    #[test]
    fn renders_table_and_svg() {
        let chart = assets::reference_chart("T");
        let rep = fit_linearity(&stats_from(&chart, |r| r), &chart, &assets::d65(), None, Default::default())
            .unwrap();
        assert!(rep.to_table().contains("verdict: PASS"));
        let svg = rep.to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 18);
    }

    proptest! {
        #[test]
        fn verdict_is_scale_invariant(alpha in 0.01f64..=1.0, gamma in prop::bool::ANY) {
            let chart = assets::reference_chart("T");
            let f = |r: f64| if gamma { r.powf(1.0 / 2.2) } else { 0.85 * r };
            let base = fit_linearity(&stats_from(&chart, f), &chart, &assets::d65(), None, Default::default()).unwrap();
            let scaled = fit_linearity(&stats_from(&chart, |r| alpha * f(r)), &chart, &assets::d65(), None, Default::default()).unwrap();
            prop_assert_eq!(base.verdict, scaled.verdict);
            prop_assert!((scaled.channels[0].slope - alpha * base.channels[0].slope).abs() < 1e-12);
        }
    }
}
