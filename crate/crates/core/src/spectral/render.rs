use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{simulate_raw_rgb, CameraModel, SceneSample, Spectrum, SpectrumError};
use crate::chart::{ChartRecord, PatchLayout};
use crate::image::{ImageState, LinearImage};

/// Optional additive Gaussian noise, clipped to `[0, 1]` after adding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    pub sigma: f64,
    /// Without a seed the generator is seeded from the OS.
    pub seed: Option<u64>,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn seeded(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            seed: Some(seed),
        }
    }
}

/// Renders a synthetic photo of `chart`: each layout rectangle is filled with
/// the simulated RAW value of its patch, everything else is zero.
pub fn render_chart_image(
    chart: &ChartRecord,
    layout: &PatchLayout,
    illuminant: &Spectrum,
    camera: &CameraModel,
    exposure_k: f64,
    noise: NoiseModel,
) -> Result<LinearImage, SpectrumError> {
    check_sigma(noise.sigma)?;
    layout
        .validate()
        .and_then(|_| layout.check_disjoint())
        .map_err(|e| SpectrumError::Render(e.to_string()))?;

    let mut img = LinearImage::new(layout.width, layout.height, ImageState::CAMERA_LINEAR);
    for rect in &layout.patches {
        let patch = chart.patch(&rect.name).ok_or_else(|| {
            SpectrumError::Render(format!("layout patch `{}` is not on the chart", rect.name))
        })?;
        let scene = SceneSample::new(patch.reflectance.clone(), illuminant.clone(), exposure_k)?;
        let rgb = simulate_raw_rgb(&scene, camera).rgb;
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                img.set(x, y, rgb);
            }
        }
    }

    add_noise(&mut img, noise)?;
    Ok(img)
}

fn check_sigma(sigma: f64) -> Result<(), SpectrumError> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(SpectrumError::Render(format!(
            "noise sigma must be >= 0, got {sigma}"
        )))
    }
}

/// Adds the noise in place, in row-major pixel order, then clips to `[0, 1]`.
pub fn add_noise(img: &mut LinearImage, noise: NoiseModel) -> Result<(), SpectrumError> {
    check_sigma(noise.sigma)?;
    if noise.sigma == 0.0 {
        return Ok(());
    }
    let mut rng = match noise.seed {
        Some(seed) => ChaCha8Rng::seed_from_u64(seed),
        None => ChaCha8Rng::from_entropy(),
    };
    let normal = Normal::new(0.0, noise.sigma).expect("sigma validated");
    for px in img.pixels_mut() {
        for v in px.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::chart::PatchRect;

    fn setup() -> (ChartRecord, PatchLayout, Spectrum, CameraModel, f64) {
        let chart = assets::reference_chart("T1");
        let layout = PatchLayout::grid(&chart.patch_names(), 6, 8, 2, 0.1);
        let d65 = assets::d65();
        let cam = assets::synthetic_camera();
        let k = cam.exposure_for_white(&d65, 0.8);
        (chart, layout, d65, cam, k)
    }

    #[test]
    fn noiseless_patches_are_constant() {
        let (chart, layout, d65, cam, k) = setup();
        let img = render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::none()).unwrap();
        for rect in &layout.patches {
            let scene =
                SceneSample::new(chart.patch(&rect.name).unwrap().reflectance.clone(), d65.clone(), k)
                    .unwrap();
            let expected = simulate_raw_rgb(&scene, &cam).rgb;
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    assert_eq!(img.get(x, y), expected);
                }
            }
        }
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let (chart, layout, d65, cam, k) = setup();
        let a = render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::seeded(0.01, 7))
            .unwrap();
        let b = render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::seeded(0.01, 7))
            .unwrap();
        let bits = |img: &LinearImage| -> Vec<u64> {
            img.pixels().iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::seeded(0.01, 8))
            .unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn overlapping_and_out_of_bounds_layouts_fail() {
        let (chart, mut layout, d65, cam, k) = setup();
        let first = layout.patches[0].clone();
        layout.patches[1] = PatchRect {
            name: layout.patches[1].name.clone(),
            ..first
        };
        assert!(render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::none()).is_err());

        let (_, mut layout, ..) = setup();
        layout.patches[0].x1 = layout.width + 1;
        assert!(render_chart_image(&chart, &layout, &d65, &cam, k, NoiseModel::none()).is_err());
    }
}
