//! Spectral integration checked against independent numeric oracles.

use proptest::prelude::*;
use uwcolor::assets;
use uwcolor::chart::{extract_patch_stats, PatchLayout};
use uwcolor::spectral::{
    integrate_product, render_chart_image, simulate_raw_rgb, standard_grid, CameraModel, NoiseModel,
    SceneSample, Spectrum, SpectrumKind,
};

/// Piecewise-linear evaluation written out directly: zero outside the knots.
fn lerp_oracle(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    for i in 0..xs.len() - 1 {
        if x >= xs[i] && x <= xs[i + 1] {
            let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
            return ys[i] * (1.0 - t) + ys[i + 1] * t;
        }
    }
    unreachable!()
}

#[test]
fn resampled_observer_curve_matches_oracle() {
    let cmf = uwcolor::colorimetry::CmfSet::cie1931();
    let ybar = &cmf.y;
    let fine: Vec<f64> = (0..=4000).map(|i| 370.0 + 0.1 * i as f64).collect();
    for grid in [standard_grid(), fine] {
        let r = ybar.resample(&grid).unwrap();
        for (&x, &v) in grid.iter().zip(r.values()) {
            let want = lerp_oracle(ybar.wavelengths(), ybar.values(), x);
            assert!((v - want).abs() <= 1e-12, "{x}: {v} vs {want}");
        }
    }
}

fn gaussian(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
    move |l: f64| (-0.5 * ((l - mu) / sigma).powi(2)).exp()
}

#[test]
fn gaussian_integral_matches_fine_quadrature() {
    let g = standard_grid();
    let s = Spectrum::from_fn(&g, SpectrumKind::Sensitivity, gaussian(550.0, 30.0)).unwrap();
    let e = Spectrum::constant(1.0, SpectrumKind::Illuminant).unwrap();
    let ramp = |l: f64| (l - 380.0) / 310.0;
    let r = Spectrum::from_fn(&g, SpectrumKind::Reflectance, ramp).unwrap();
    let got = integrate_product(&s, &e, &r).unwrap();

    // Midpoint rule at 0.1 nm on the continuous functions.
    let h = 0.1;
    let n = (310.0 / h) as usize;
    let oracle: f64 = (0..n)
        .map(|i| {
            let l = 380.0 + h * (i as f64 + 0.5);
            gaussian(550.0, 30.0)(l) * ramp(l) * h
        })
        .sum();
    let rel = (got - oracle).abs() / oracle;
    assert!(rel < 0.005, "relative difference {rel}");
}

fn fine_grid() -> Vec<f64> {
    (0..=124).map(|i| 380.0 + 2.5 * i as f64).collect()
}

fn fine_response(cam: &CameraModel, r: &Spectrum, e: &Spectrum) -> [f64; 3] {
    let g = fine_grid();
    let (r, e) = (r.resample(&g).unwrap(), e.resample(&g).unwrap());
    std::array::from_fn(|c| integrate_product(&cam.channels()[c].resample(&g).unwrap(), &e, &r).unwrap())
}

proptest! {
    /// Gaussian sensitivities that vanish inside the grid and reflectances with
    /// knots every 50 nm and slopes of at most 0.005 per nm. The trapezoid error
    /// scales with h²·∫|S'·R'|, so steeper features need a finer grid. Changes are
    /// measured against each channel's full-scale (perfect white) response.
    #[test]
    fn halving_the_grid_step_changes_band_limited_rgb_by_under_a_permille(
        start in 0.0f64..=1.0,
        steps in prop::collection::vec(-0.25f64..=0.25, 7),
        mu in 500.0f64..570.0,
        width in 30.0f64..40.0,
    ) {
        let xs = vec![380.0, 430.0, 480.0, 530.0, 580.0, 630.0, 680.0, 690.0];
        let mut knots = vec![start];
        for (i, d) in steps.iter().enumerate() {
            let step = if i == 6 { d / 5.0 } else { *d };
            knots.push((knots[i] + step).clamp(0.0, 1.0));
        }
        let r = Spectrum::new(xs, knots, SpectrumKind::Reflectance).unwrap();
        let cam = CameraModel::gaussian("g", [(mu, width), (mu - 15.0, width + 5.0), (mu + 15.0, width - 5.0)]).unwrap();
        let e = Spectrum::constant(1.0, SpectrumKind::Illuminant).unwrap();
        let coarse = cam.response(&r, &e);
        let fine = fine_response(&cam, &r, &e);
        let white = cam.response(&Spectrum::constant(1.0, SpectrumKind::Reflectance).unwrap(), &e);
        for c in 0..3 {
            prop_assert!((coarse[c] - fine[c]).abs() / white[c] < 1e-3, "{} vs {}", coarse[c], fine[c]);
        }
    }
}

/// Measured 5 nm sensitivities and 10 nm chart spectra are not band-limited at
/// the grid scale; on exposure-normalized values the change stays below 0.1% of
/// full scale.
#[test]
fn halving_the_grid_step_on_measured_data() {
    let d65 = assets::d65();
    let chart = assets::reference_chart("X");
    for cam in [assets::nikon_d5100(), assets::synthetic_camera()] {
        let k = cam.exposure_for_white(&d65, 1.0);
        for patch in &chart.patches {
            let coarse = cam.response(&patch.reflectance, &d65);
            let fine = fine_response(&cam, &patch.reflectance, &d65);
            for c in 0..3 {
                let diff = k * (coarse[c] - fine[c]).abs();
                assert!(diff < 1e-3, "{} {} channel {c}: {diff}", cam.name, patch.name);
            }
        }
    }
}

fn scene(values: &[f64]) -> SceneSample {
    let r = Spectrum::new(standard_grid(), values.to_vec(), SpectrumKind::Reflectance).unwrap();
    SceneSample::new(r, assets::d65(), 1e-3).unwrap()
}

fn reflectance() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=0.5, 63)
}

proptest! {
    #[test]
    fn homogeneous(r in reflectance(), alpha in 0.0f64..=1.0) {
        let cam = assets::nikon_d5100();
        let base = simulate_raw_rgb(&scene(&r), &cam).unwrap_or_clip();
        let scaled: Vec<f64> = r.iter().map(|v| alpha * v).collect();
        let out = simulate_raw_rgb(&scene(&scaled), &cam).unwrap_or_clip();
        for c in 0..3 {
            prop_assert!((out[c] - alpha * base[c]).abs() <= 1e-12);
        }
    }

    #[test]
    fn additive(a in reflectance(), b in reflectance()) {
        let cam = assets::synthetic_camera();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (ra, rb, rs) = (
            simulate_raw_rgb(&scene(&a), &cam).unwrap_or_clip(),
            simulate_raw_rgb(&scene(&b), &cam).unwrap_or_clip(),
            simulate_raw_rgb(&scene(&sum), &cam).unwrap_or_clip(),
        );
        for c in 0..3 {
            prop_assert!((rs[c] - ra[c] - rb[c]).abs() <= 1e-12);
        }
    }

    #[test]
    fn exposure_equivariant(r in reflectance(), k in 0.1f64..10.0) {
        let cam = assets::synthetic_camera();
        let s1 = scene(&r);
        let sk = SceneSample { exposure_k: s1.exposure_k * k, ..s1.clone() };
        let (a, b) = (simulate_raw_rgb(&s1, &cam).unclipped, simulate_raw_rgb(&sk, &cam).unclipped);
        for c in 0..3 {
            prop_assert!((b[c] - k * a[c]).abs() <= 1e-12 * b[c].abs().max(1.0));
        }
    }
}

trait Unclipped {
    fn unwrap_or_clip(self) -> [f64; 3];
}

impl Unclipped for uwcolor::spectral::RawRgb {
    fn unwrap_or_clip(self) -> [f64; 3] {
        self.unclipped
    }
}

#[test]
fn distinct_cameras_disagree_on_raw_values() {
    let chart = assets::reference_chart("X");
    let d65 = assets::d65();
    let cams: [CameraModel; 2] = [assets::nikon_d5100(), assets::synthetic_camera()];
    let ks = cams.clone().map(|c| c.exposure_for_white(&d65, 0.8));
    let mut total = 0.0;
    for p in &chart.patches {
        let a = cams[0].response(&p.reflectance, &d65);
        let b = cams[1].response(&p.reflectance, &d65);
        total += (0..3).map(|c| (ks[0] * a[c] - ks[1] * b[c]).abs()).sum::<f64>();
    }
    assert!(total / 72.0 > 0.02);
}

/// Patches of 40×40 pixels; the 0.1 margin leaves 32×32 = 1024 per patch.
fn noisy_patch_errors(sigma: f64) -> (f64, usize) {
    let chart = assets::reference_chart("X");
    let d65 = assets::d65();
    let cam = assets::synthetic_camera();
    let k = cam.exposure_for_white(&d65, 0.8);
    let layout = PatchLayout::grid(&chart.patch_names(), 6, 40, 2, 0.1);
    let img = render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::seeded(sigma, 2024)).unwrap();
    let stats = extract_patch_stats(&img, &layout).unwrap();
    let mut worst: f64 = 0.0;
    let mut min_pixels = usize::MAX;
    for p in &chart.patches {
        let s = stats.get(&p.name).unwrap();
        min_pixels = min_pixels.min(s.pixel_count);
        let truth = cam.response(&p.reflectance, &d65).map(|v| v * k);
        for c in 0..3 {
            worst = worst.max((s.mean[c] - truth[c]).abs());
        }
    }
    (worst, min_pixels)
}

#[test]
fn noisy_patch_means_converge() {
    let sigma = 0.002;
    let (worst, n) = noisy_patch_errors(sigma);
    assert!(n >= 1000, "{n} pixels");
    // 72 channel means; 4.5 standard errors of a 10%-trimmed mean bounds them all
    // with overwhelming probability.
    let bound = 4.5 * 1.1 * sigma / (n as f64).sqrt();
    assert!(worst <= bound, "worst {worst:.2e} > {bound:.2e}");
    assert_eq!(noisy_patch_errors(0.0).0, 0.0);
}

/// A 1e-6 tolerance is far below the sampling error of a ~1000-pixel mean at
/// this noise level (about 6e-5), so it cannot hold for a generic seed.
#[test]
#[ignore = "sampling error of a 1000-pixel mean at sigma 0.002 is about 6e-5"]
fn noisy_patch_means_within_1e6() {
    let (worst, _) = noisy_patch_errors(0.002);
    assert!(worst <= 1e-6, "worst {worst:.2e}");
}
