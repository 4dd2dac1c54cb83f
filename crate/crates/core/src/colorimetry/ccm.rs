use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::{delta_e76, patch_xyz, white_point, xyz_to_lab, CmfSet, ColorError, Xyz};
use crate::chart::{ChartRecord, PatchStats};
use crate::image::{ColorSpace, ImageState, InputPolicy, LinearImage};
use crate::spectral::{CameraModel, Spectrum, SpectrumKind};

pub const MIN_FIT_PAIRS: usize = 4;
/// Smallest accepted ratio of the extreme singular values of the camera RGB matrix.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    ChartFit,
    SensitivityFit,
}

/// A camera RGB → XYZ matrix valid under one illuminant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorCalibration {
    /// Row-major; `xyz = matrix · rgb`.
    pub matrix: [[f64; 3]; 3],
    /// Reference to the illuminant the fit was made under.
    pub illuminant: String,
    pub white_point: Xyz,
    pub source: CalibrationSource,
    /// Mean ΔE76 over the fitted patches.
    pub residual: f64,
}

impl ColorCalibration {
    pub fn apply(&self, rgb: [f64; 3]) -> Xyz {
        camera_rgb_to_xyz(rgb, &self.matrix)
    }
}

pub fn camera_rgb_to_xyz(rgb: [f64; 3], m: &[[f64; 3]; 3]) -> Xyz {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcmFitOptions {
    /// One positive weight per pair; uniform when `None`.
    pub weights: Option<Vec<f64>>,
    /// `(rgb, xyz)` that the fitted matrix must map exactly.
    pub white_constraint: Option<([f64; 3], Xyz)>,
    /// White point for L*a*b* residuals; `Y` normalized to 1.
    pub white_point: Xyz,
    pub illuminant: String,
    pub source: CalibrationSource,
}

impl CcmFitOptions {
    pub fn new(white_point: Xyz, illuminant: impl Into<String>) -> Self {
        Self {
            weights: None,
            white_constraint: None,
            white_point,
            illuminant: illuminant.into(),
            source: CalibrationSource::ChartFit,
        }
    }
}

/// Weighted least-squares `M = argmin Σ wᵢ‖M·rgbᵢ − xyzᵢ‖²`, optionally
/// subject to `M·rgb_w = xyz_w` (solved per row through its KKT system).
pub fn fit_ccm(
    camera_rgbs: &[[f64; 3]],
    target_xyzs: &[Xyz],
    opts: &CcmFitOptions,
) -> Result<ColorCalibration, ColorError> {
    let n = camera_rgbs.len();
    if n != target_xyzs.len() {
        return Err(ColorError::LengthMismatch(n, target_xyzs.len()));
    }
    if n < MIN_FIT_PAIRS {
        return Err(ColorError::TooFewPairs(n));
    }
    let weights = match &opts.weights {
        Some(w) if w.len() != n || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) => {
            return Err(ColorError::InvalidWeights)
        }
        Some(w) => w.clone(),
        None => vec![1.0; n],
    };
    if opts.white_point.iter().any(|&v| !(v > 0.0)) {
        return Err(ColorError::NonPositiveWhite(opts.white_point));
    }

    let design = DMatrix::from_fn(n, 3, |i, j| camera_rgbs[i][j]);
    let sv = design.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin / smax < RANK_TOLERANCE {
        return Err(ColorError::RankDeficient(if smax > 0.0 { smin / smax } else { 0.0 }));
    }

    let mut normal = Matrix3::zeros();
    let mut rhs = [Vector3::zeros(); 3];
    for ((rgb, xyz), w) in camera_rgbs.iter().zip(target_xyzs).zip(&weights) {
        let x = Vector3::from(*rgb);
        normal += *w * x * x.transpose();
        for r in 0..3 {
            rhs[r] += *w * xyz[r] * x;
        }
    }

    let mut matrix = [[0.0; 3]; 3];
    match opts.white_constraint {
        None => {
            let lu = normal.lu();
            for r in 0..3 {
                let row = lu.solve(&rhs[r]).ok_or(ColorError::Singular)?;
                matrix[r] = [row[0], row[1], row[2]];
            }
        }
        Some((w_rgb, w_xyz)) => {
            let c = Vector3::from(w_rgb);
            let mut kkt = Matrix4::zeros();
            kkt.fixed_view_mut::<3, 3>(0, 0).copy_from(&normal);
            kkt.fixed_view_mut::<3, 1>(0, 3).copy_from(&c);
            kkt.fixed_view_mut::<1, 3>(3, 0).copy_from(&c.transpose());
            let lu = kkt.lu();
            for r in 0..3 {
                let b = Vector4::new(rhs[r][0], rhs[r][1], rhs[r][2], w_xyz[r]);
                let sol = lu.solve(&b).ok_or(ColorError::Singular)?;
                matrix[r] = [sol[0], sol[1], sol[2]];
            }
        }
    }
    if Matrix3::from_fn(|i, j| matrix[i][j]).determinant().abs() < 1e-300 {
        return Err(ColorError::Singular);
    }

    let mut total = 0.0;
    for (rgb, xyz) in camera_rgbs.iter().zip(target_xyzs) {
        let fitted = camera_rgb_to_xyz(*rgb, &matrix);
        total += delta_e76(
            xyz_to_lab(fitted, opts.white_point)?,
            xyz_to_lab(*xyz, opts.white_point)?,
        );
    }
    Ok(ColorCalibration {
        matrix,
        illuminant: opts.illuminant.clone(),
        white_point: opts.white_point,
        source: opts.source,
        residual: total / n as f64,
    })
}

/// Ground-truth XYZ for every patch of `chart` under `illuminant`, in chart order.
pub fn chart_targets(
    chart: &ChartRecord,
    illuminant: &Spectrum,
    cmf: &CmfSet,
) -> Result<Vec<(String, Xyz)>, ColorError> {
    chart
        .patches
        .iter()
        .map(|p| Ok((p.name.clone(), patch_xyz(&p.reflectance, illuminant, cmf)?)))
        .collect()
}

/// Chart-in-scene calibration from measured patch means, constrained so the
/// chart's white patch maps exactly onto its target.
pub fn fit_chart_ccm(
    stats: &PatchStats,
    chart: &ChartRecord,
    illuminant: &Spectrum,
    illuminant_label: &str,
    cmf: &CmfSet,
) -> Result<ColorCalibration, ColorError> {
    let wp = white_point(illuminant, cmf)?;
    let targets = chart_targets(chart, illuminant, cmf)?;
    let mut rgbs = Vec::new();
    let mut xyzs = Vec::new();
    for (name, xyz) in &targets {
        if let Some(s) = stats.get(name) {
            rgbs.push(s.mean);
            xyzs.push(*xyz);
        }
    }
    let white = chart
        .white_patch()
        .ok_or_else(|| ColorError::Chart("chart has no achromatic patch".into()))?;
    let white_rgb = stats
        .get(&white.name)
        .ok_or_else(|| ColorError::Chart(format!("white patch `{}` not measured", white.name)))?
        .mean;
    let white_xyz = targets
        .iter()
        .find(|(n, _)| *n == white.name)
        .map(|(_, x)| *x)
        .expect("white patch is on the chart");
    let mut opts = CcmFitOptions::new(wp, illuminant_label);
    opts.white_constraint = Some((white_rgb, white_xyz));
    fit_ccm(&rgbs, &xyzs, &opts)
}

/// Precomputes a matrix from measured sensitivities: simulated RGB of the
/// `training` reflectances (at `exposure_k`) against their XYZ, with the
/// perfect reflector constrained onto the white point.
pub fn fit_ccm_from_sensitivities(
    camera: &CameraModel,
    illuminant: &Spectrum,
    illuminant_label: &str,
    cmf: &CmfSet,
    training: &[Spectrum],
    exposure_k: f64,
) -> Result<ColorCalibration, ColorError> {
    let wp = white_point(illuminant, cmf)?;
    let mut rgbs = Vec::with_capacity(training.len());
    let mut xyzs = Vec::with_capacity(training.len());
    for r in training {
        rgbs.push(camera.response(r, illuminant).map(|v| v * exposure_k));
        xyzs.push(patch_xyz(r, illuminant, cmf)?);
    }
    let one = Spectrum::constant(1.0, SpectrumKind::Reflectance)?;
    let white_rgb = camera.response(&one, illuminant).map(|v| v * exposure_k);
    let mut opts = CcmFitOptions::new(wp, illuminant_label);
    opts.white_constraint = Some((white_rgb, wp));
    opts.source = CalibrationSource::SensitivityFit;
    fit_ccm(&rgbs, &xyzs, &opts)
}

/// Per-pixel `M·rgb`; the result is tagged device-independent (CIE XYZ).
pub fn camera_to_xyz(
    img: &LinearImage,
    cal: &ColorCalibration,
    policy: InputPolicy,
) -> Result<LinearImage, ColorError> {
    img.require_linear(policy)?;
    if img.state.space != ColorSpace::CameraNative {
        return Err(ColorError::WrongSpace {
            expected: "camera-native RGB",
            got: img.state.space,
        });
    }
    let encoding = img.state.encoding;
    Ok(img
        .map_pixels(|p| cal.apply(p))
        .with_state(ImageState {
            encoding,
            space: ColorSpace::CieXyz,
        }))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::image::Encoding;
    use crate::spectral::{simulate_raw_rgb, SceneSample};
    use proptest::prelude::*;

    fn chart_rgb_xyz(cam: &CameraModel) -> (Vec<[f64; 3]>, Vec<Xyz>, Xyz, [f64; 3], Xyz) {
        let chart = assets::reference_chart("T");
        let d65 = assets::d65();
        let cmf = CmfSet::cie1931();
        let k = cam.exposure_for_white(&d65, 0.8);
        let mut rgbs = vec![];
        let mut xyzs = vec![];
        for p in &chart.patches {
            let s = SceneSample::new(p.reflectance.clone(), d65.clone(), k).unwrap();
            rgbs.push(simulate_raw_rgb(&s, cam).rgb);
            xyzs.push(patch_xyz(&p.reflectance, &d65, &cmf).unwrap());
        }
        let wp = white_point(&d65, &cmf).unwrap();
        (rgbs.clone(), xyzs.clone(), wp, rgbs[18], xyzs[18])
    }

    #[test]
    fn cmf_camera_yields_identity() {
        let cmf = CmfSet::cie1931();
        let cam = CameraModel::new(
            "cmf",
            [&cmf.x, &cmf.y, &cmf.z].map(|s| {
                Spectrum::new(s.wavelengths().to_vec(), s.values().to_vec(), SpectrumKind::Sensitivity)
                    .unwrap()
            }),
        )
        .unwrap();
        let chart = assets::reference_chart("T");
        let d65 = assets::d65();
        let wp = white_point(&d65, &cmf).unwrap();
        // with K = 1/∫ȳE as exposure, simulated RGB equals XYZ
        let k = 1.0 / cam.response(&Spectrum::constant(1.0, SpectrumKind::Reflectance).unwrap(), &d65)[1];
        let rgbs: Vec<_> = chart
            .patches
            .iter()
            .map(|p| cam.response(&p.reflectance, &d65).map(|v| v * k))
            .collect();
        let xyzs: Vec<_> = chart
            .patches
            .iter()
            .map(|p| patch_xyz(&p.reflectance, &d65, &cmf).unwrap())
            .collect();
        let mut opts = CcmFitOptions::new(wp, "D65");
        opts.white_constraint = Some((rgbs[18], xyzs[18]));
        let cal = fit_ccm(&rgbs, &xyzs, &opts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((cal.matrix[i][j] - expect).abs() < 1e-9, "{:?}", cal.matrix);
            }
        }
        assert!(cal.residual < 1e-9);
    }

    #[test]
    fn identical_patches_are_rank_deficient() {
        let rgbs = vec![[0.2, 0.3, 0.4]; 6];
        let xyzs = vec![[0.2, 0.3, 0.4]; 6];
        let opts = CcmFitOptions::new([0.95, 1.0, 1.09], "D65");
        assert!(matches!(fit_ccm(&rgbs, &xyzs, &opts), Err(ColorError::RankDeficient(_))));
    }

    #[test]
    fn too_few_pairs() {
        let rgbs = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let opts = CcmFitOptions::new([0.95, 1.0, 1.09], "D65");
        assert_eq!(fit_ccm(&rgbs, &rgbs, &opts), Err(ColorError::TooFewPairs(3)));
    }

    #[test]
    fn white_constraint_is_exact() {
        let (rgbs, xyzs, wp, w_rgb, w_xyz) = chart_rgb_xyz(&assets::nikon_d5100());
        let mut opts = CcmFitOptions::new(wp, "D65");
        opts.white_constraint = Some((w_rgb, w_xyz));
        let cal = fit_ccm(&rgbs, &xyzs, &opts).unwrap();
        let mapped = cal.apply(w_rgb);
        for c in 0..3 {
            assert!((mapped[c] - w_xyz[c]).abs() <= 1e-12, "{mapped:?} vs {w_xyz:?}");
        }
        assert!(cal.residual < 2.0, "{}", cal.residual);
    }

    #[test]
    fn weights_are_validated() {
        let (rgbs, xyzs, wp, ..) = chart_rgb_xyz(&assets::synthetic_camera());
        let mut opts = CcmFitOptions::new(wp, "D65");
        opts.weights = Some(vec![1.0; 3]);
        assert_eq!(fit_ccm(&rgbs, &xyzs, &opts), Err(ColorError::InvalidWeights));
        opts.weights = Some(vec![2.0; rgbs.len()]);
        let weighted = fit_ccm(&rgbs, &xyzs, &opts).unwrap();
        opts.weights = None;
        let plain = fit_ccm(&rgbs, &xyzs, &opts).unwrap();
        assert!((weighted.residual - plain.residual).abs() < 1e-9);
    }

    #[test]
    fn sensitivity_fit_matches_chart_fit_on_same_data() {
        let cam = assets::synthetic_camera();
        let d65 = assets::d65();
        let cmf = CmfSet::cie1931();
        let chart = assets::reference_chart("T");
        let k = cam.exposure_for_white(&d65, 0.8);
        let training: Vec<_> = chart.patches.iter().map(|p| p.reflectance.clone()).collect();
        let cal = fit_ccm_from_sensitivities(&cam, &d65, "D65", &cmf, &training, k).unwrap();
        assert_eq!(cal.source, CalibrationSource::SensitivityFit);
        assert!(cal.residual < 2.0);
        let one = Spectrum::constant(1.0, SpectrumKind::Reflectance).unwrap();
        let w = cal.apply(cam.response(&one, &d65).map(|v| v * k));
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_to_xyz_retags_and_refuses_processed() {
        let cal = ColorCalibration {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            illuminant: "D65".into(),
            white_point: [0.95, 1.0, 1.09],
            source: CalibrationSource::ChartFit,
            residual: 0.0,
        };
        let img = LinearImage::filled(2, 2, [0.1, 0.2, 0.3], ImageState::CAMERA_LINEAR);
        let out = camera_to_xyz(&img, &cal, InputPolicy::RejectProcessed).unwrap();
        assert_eq!(out.pixels(), img.pixels());
        assert_eq!(out.state.space, ColorSpace::CieXyz);
        let zero = LinearImage::new(1, 1, ImageState::CAMERA_LINEAR);
        assert_eq!(camera_to_xyz(&zero, &cal, InputPolicy::RejectProcessed).unwrap().get(0, 0), [0.0; 3]);

        let mut processed = img.clone();
        processed.state.encoding = Encoding::Processed;
        assert!(camera_to_xyz(&processed, &cal, InputPolicy::RejectProcessed).is_err());
        assert!(camera_to_xyz(&processed, &cal, InputPolicy::AllowProcessed).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn residual_is_exposure_independent(alpha in 0.05f64..1.0) {
            let (rgbs, xyzs, wp, w_rgb, w_xyz) = chart_rgb_xyz(&assets::synthetic_camera());
            let mut opts = CcmFitOptions::new(wp, "D65");
            opts.white_constraint = Some((w_rgb, w_xyz));
            let base = fit_ccm(&rgbs, &xyzs, &opts).unwrap();
            let scaled: Vec<_> = rgbs.iter().map(|c| c.map(|v| v * alpha)).collect();
            opts.white_constraint = Some((w_rgb.map(|v| v * alpha), w_xyz));
            let fit = fit_ccm(&scaled, &xyzs, &opts).unwrap();
            prop_assert!((fit.residual - base.residual).abs() < 1e-9);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((fit.matrix[i][j] * alpha - base.matrix[i][j]).abs() < 1e-9 * base.matrix[i][j].abs().max(1.0));
                }
            }
        }
    }
}
