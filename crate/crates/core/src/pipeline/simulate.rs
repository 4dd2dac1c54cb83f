//! Deterministic synthetic fixtures: a row of identical charts at increasing
//! distance through water, above a floor strip whose distance ramps across the
//! image, plus a reference chart capture and a ready-to-run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{
    strip_nulls, FrameInput, ImageInput, PipelineConfig, ReferenceFrame, Thresholds, WaterConfig,
    WaterMode,
};
use super::PipelineError;
use crate::assets;
use crate::chart::{ChartRecord, ChartRegistry, PatchLayout};
use crate::colorimetry::{chart_targets, white_point, CmfSet};
use crate::image::{ImageState, LinearImage};
use crate::io::{self, pfm, spectra};
use crate::isp::{apply_profile, IspProfile};
use crate::spectral::{
    add_noise, render_chart_image, CameraModel, NoiseModel, Spectrum, SpectrumKind,
};
use crate::water::{forward_degrade, DepthMap, WaterProperties};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FloorConfig {
    /// Rows of floor below the charts; 0 disables the floor.
    pub height: usize,
    pub z_near: f64,
    pub z_far: f64,
    pub reflectance: f64,
    /// Share of floor pixels that are fully shadowed (zero reflectance).
    pub shadow_fraction: f64,
}

impl Default for FloorConfig {
    fn default() -> Self {
        Self {
            height: 16,
            z_near: 0.4,
            z_far: 20.0,
            reflectance: 0.3,
            shadow_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub seed: u64,
    /// Built-in camera name or camera JSON path.
    pub camera: String,
    /// Built-in illuminant name.
    pub illuminant: String,
    pub chart_id: String,
    /// Camera-to-chart distance of each chart, meters.
    pub distances: Vec<f64>,
    pub water: WaterProperties,
    pub noise_sigma: f64,
    /// Photofinishing applied to every emitted image (built-in name or JSON path).
    pub isp_profile: Option<String>,
    pub patch_size: usize,
    pub gap: usize,
    pub margin_frac: f64,
    /// Exposure is set so a perfect reflector reads this on its largest channel.
    pub white_level: f64,
    /// Distance of the reference chart capture; 0 is in air.
    pub reference_z: f64,
    pub floor: FloorConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            camera: "synthetic_gaussian".into(),
            illuminant: "D65".into(),
            chart_id: "REF24-0001".into(),
            distances: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            water: WaterProperties::coastal(),
            noise_sigma: 0.0,
            isp_profile: None,
            patch_size: 10,
            gap: 2,
            margin_frac: 0.1,
            white_level: 0.8,
            reference_z: 0.0,
            floor: FloorConfig::default(),
        }
    }
}

const CHART_COLUMNS: usize = 6;

impl SceneConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Validation(m));
        if self.distances.is_empty() {
            return fail("scene needs at least one chart".into());
        }
        if let Some(z) = self.distances.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
            return fail(format!("chart distance {z} must be > 0"));
        }
        self.water
            .validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.patch_size < 3 {
            return fail(format!("patch_size must be >= 3, got {}", self.patch_size));
        }
        if !(0.0..=crate::chart::MAX_MARGIN_FRAC).contains(&self.margin_frac) {
            return fail(format!("margin_frac must be in [0, 0.45], got {}", self.margin_frac));
        }
        if !(self.white_level > 0.0 && self.white_level <= 1.0) {
            return fail(format!("white_level must be in (0, 1], got {}", self.white_level));
        }
        if !(self.reference_z >= 0.0 && self.reference_z.is_finite()) {
            return fail(format!("reference_z must be >= 0, got {}", self.reference_z));
        }
        let f = &self.floor;
        if f.height > 0
            && !(f.z_near > 0.0
                && f.z_far > f.z_near
                && (0.0..=1.0).contains(&f.reflectance)
                && (0.0..1.0).contains(&f.shadow_fraction))
        {
            return fail("floor needs 0 < z_near < z_far, reflectance in [0, 1], shadow_fraction in [0, 1)".into());
        }
        if assets::builtin_illuminant(&self.illuminant).is_none() {
            return fail(format!("unknown illuminant `{}` (built-ins: D65, E)", self.illuminant));
        }
        if !crate::chart::valid_id(&self.chart_id) {
            return fail(format!("invalid chart id `{}`", self.chart_id));
        }
        Ok(())
    }

    fn load_camera(&self) -> Result<CameraModel, PipelineError> {
        match assets::builtin_camera(&self.camera) {
            Some(c) => Ok(c),
            None => Ok(spectra::read_camera(Path::new(&self.camera))?),
        }
    }
}

/// Everything the simulator produces, in memory.
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub config: SceneConfig,
    pub chart: ChartRecord,
    pub camera: CameraModel,
    pub illuminant: Spectrum,
    pub exposure_k: f64,
    /// Observed (degraded, noisy, optionally photofinished) scene.
    pub scene: LinearImage,
    /// The same scene without water, noise or photofinishing.
    pub scene_in_air: LinearImage,
    pub depth: DepthMap,
    /// One layout per chart, in scene coordinates.
    pub chart_layouts: Vec<PatchLayout>,
    pub reference: LinearImage,
    pub reference_layout: PatchLayout,
    pub truth: Value,
}

impl SimulatedScene {
    /// Index of the chart closest to the camera.
    pub fn nearest_chart(&self) -> usize {
        self.config
            .distances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("validated: at least one chart")
    }
}

pub fn simulate_scene(cfg: &SceneConfig) -> Result<SimulatedScene, PipelineError> {
    cfg.validate()?;
    let camera = cfg.load_camera()?;
    let illuminant = assets::builtin_illuminant(&cfg.illuminant).expect("validated");
    let chart = assets::reference_chart(&cfg.chart_id);
    let k = camera.exposure_for_white(&illuminant, cfg.white_level);
    let profile = cfg.isp_profile.as_deref().map(IspProfile::resolve).transpose()?;

    let grid = PatchLayout::grid(&chart.patch_names(), CHART_COLUMNS, cfg.patch_size, cfg.gap, cfg.margin_frac);
    let chart_img = render_chart_image(&chart, &grid, &illuminant, &camera, k, NoiseModel::none())?;
    let (cw, ch) = (grid.width, grid.height);
    let n = cfg.distances.len();
    let width = n * cw;
    let height = ch + cfg.floor.height;

    let floor_refl = Spectrum::constant(cfg.floor.reflectance, SpectrumKind::Reflectance)?;
    let floor_rgb = camera.response(&floor_refl, &illuminant).map(|v| (v * k).clamp(0.0, 1.0));
    let shadow_every = if cfg.floor.shadow_fraction > 0.0 {
        (1.0 / cfg.floor.shadow_fraction).round() as usize
    } else {
        usize::MAX
    };

    let mut j = LinearImage::new(width, height, ImageState::CAMERA_LINEAR);
    let mut z = vec![0.0; width * height];
    for (i, &zi) in cfg.distances.iter().enumerate() {
        for y in 0..ch {
            for x in 0..cw {
                j.set(i * cw + x, y, chart_img.get(x, y));
                z[y * width + i * cw + x] = zi;
            }
        }
    }
    for y in ch..height {
        for x in 0..width {
            let f = if width > 1 { x as f64 / (width - 1) as f64 } else { 0.0 };
            z[y * width + x] = cfg.floor.z_near + (cfg.floor.z_far - cfg.floor.z_near) * f;
            let idx = (y - ch) * width + x;
            // Spread shadows over rows so every column range gets its share.
            let shadowed = (idx * 7 + (y - ch) * 3).is_multiple_of(shadow_every);
            j.set(x, y, if shadowed { [0.0; 3] } else { floor_rgb });
        }
    }
    let depth = DepthMap::new(width, height, z).expect("sized");
    let finish = |img: LinearImage, seed: u64| -> Result<LinearImage, PipelineError> {
        let mut img = img;
        add_noise(&mut img, NoiseModel::seeded(cfg.noise_sigma, seed))?;
        Ok(match &profile {
            Some(p) => apply_profile(p, &img)?,
            None => img,
        })
    };
    let scene = finish(forward_degrade(&j, &depth, &cfg.water, Default::default())?, cfg.seed)?;

    let reference_raw = if cfg.reference_z > 0.0 {
        forward_degrade(
            &chart_img,
            &DepthMap::uniform(cw, ch, cfg.reference_z),
            &cfg.water,
            Default::default(),
        )?
    } else {
        chart_img.clone()
    };
    let reference = finish(reference_raw, cfg.seed.wrapping_add(1))?;
    let chart_layouts: Vec<PatchLayout> = (0..n).map(|i| grid.placed(i * cw, 0, width, height)).collect();

    let cmf = CmfSet::cie1931();
    let targets = chart_targets(&chart, &illuminant, &cmf)?;
    let white = chart.white_patch().expect("bundled chart has neutrals");
    let white_rgb = camera.response(&white.reflectance, &illuminant).map(|v| v * k);
    let truth = json!({
        "seed": cfg.seed,
        "chart_id": cfg.chart_id,
        "camera": camera.name,
        "illuminant": cfg.illuminant,
        "white_point": white_point(&illuminant, &cmf)?,
        "exposure_k": k,
        "water": cfg.water,
        "noise_sigma": cfg.noise_sigma,
        "isp_profile": cfg.isp_profile,
        "reference_z": cfg.reference_z,
        "white_patch": white.name,
        "charts": cfg.distances.iter().enumerate().map(|(i, &zi)| json!({
            "index": i,
            "z": zi,
            "layout": format!("layouts/chart_{i}.json"),
            "white_in_air": white_rgb,
            "white_observed_model": cfg.water.degrade_pixel(white_rgb, zi),
        })).collect::<Vec<_>>(),
        "patches": targets.iter().map(|(name, xyz)| {
            let p = chart.patch(name).expect("target from chart");
            json!({
                "name": name,
                "xyz": xyz,
                "camera_rgb": camera.response(&p.reflectance, &illuminant).map(|v| v * k),
            })
        }).collect::<Vec<_>>(),
    });

    Ok(SimulatedScene {
        config: cfg.clone(),
        chart,
        camera,
        illuminant,
        exposure_k: k,
        scene,
        scene_in_air: j,
        depth,
        chart_layouts,
        reference,
        reference_layout: grid,
        truth,
    })
}

/// File names of a written fixture set, relative to its directory.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub run_config: PathBuf,
    pub scene: SimulatedScene,
}

/// The run configuration matching a fixture written by [`write_fixture`].
pub fn fixture_run_config(s: &SimulatedScene) -> PipelineConfig {
    PipelineConfig {
        output_dir: "out".into(),
        registry: "registry".into(),
        chart_id: s.config.chart_id.clone(),
        layout: "layout.json".into(),
        images: vec![ImageInput {
            id: Some("scene".into()),
            path: "scene.pfm".into(),
            depth: Some("depth.pfm".into()),
        }],
        camera: Some("camera.json".into()),
        illuminant: "illuminant.csv".into(),
        illuminant_label: Some(s.config.illuminant.clone()),
        linearity_frame: Some(FrameInput {
            image: "reference.pfm".into(),
            layout: "reference_layout.json".into(),
        }),
        water: WaterConfig {
            mode: WaterMode::Estimate,
            reference: Some(ReferenceFrame {
                image: "reference.pfm".into(),
                layout: "reference_layout.json".into(),
                z: s.config.reference_z,
            }),
            observations: (0..s.chart_layouts.len())
                .map(|i| format!("layouts/chart_{i}.json").into())
                .collect(),
            ..WaterConfig::default()
        },
        thresholds: Thresholds::default(),
        firmware: Some("synthetic".into()),
        field_metadata: Some(json!({"site": "synthetic", "seed": s.config.seed})),
        display_png: false,
        linearity_svg: false,
        override_linearity: false,
    }
}

fn write(dir: &Path, files: &mut Vec<PathBuf>, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::Io(format!("{}: {e}", parent.display())))?;
    }
    io::write_atomic(&path, bytes)?;
    files.push(name.into());
    Ok(())
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializes");
    b.push(b'\n');
    b
}

pub fn write_fixture(s: &SimulatedScene, dir: &Path) -> Result<(Vec<PathBuf>, PathBuf), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let f = &mut files;
    write(dir, f, "scene.pfm", &pfm::encode(&pfm::PfmImage::from_linear_image(&s.scene)))?;
    let depth = pfm::PfmImage {
        width: s.depth.width(),
        height: s.depth.height(),
        channels: 1,
        data: s.depth.values().iter().map(|&z| z as f32).collect(),
    };
    write(dir, f, "depth.pfm", &pfm::encode(&depth))?;
    write(dir, f, "reference.pfm", &pfm::encode(&pfm::PfmImage::from_linear_image(&s.reference)))?;
    write(dir, f, "reference_layout.json", s.reference_layout.to_json().as_bytes())?;
    write(dir, f, "layout.json", s.chart_layouts[s.nearest_chart()].to_json().as_bytes())?;
    for (i, l) in s.chart_layouts.iter().enumerate() {
        write(dir, f, &format!("layouts/chart_{i}.json"), l.to_json().as_bytes())?;
    }
    let camera_doc = spectra::CameraDocument::from_camera(&s.camera);
    write(dir, f, "camera.json", &pretty(&camera_doc))?;
    write(dir, f, "illuminant.csv", spectra::to_csv(&s.illuminant).as_bytes())?;
    write(dir, f, "water.json", &pretty(&s.config.water))?;
    write(dir, f, "truth.json", &pretty(&s.truth))?;
    write(dir, f, "scene.json", &pretty(&s.config))?;

    let registry = ChartRegistry::open(dir.join("registry"))?;
    registry.put(&s.chart, true)?;
    f.push(format!("registry/{}.json", s.chart.chart_id).into());

    let cfg = fixture_run_config(s);
    let toml_text = toml::to_string(&strip_nulls(cfg.to_value()))
        .map_err(|e| PipelineError::Validation(format!("run config: {e}")))?;
    write(dir, f, "run.toml", toml_text.as_bytes())?;
    Ok((files, dir.join("run.toml")))
}

/// Simulates the scene and writes its fixture set into `dir`.
pub fn simulate(cfg: &SceneConfig, dir: &Path) -> Result<SimulationOutput, PipelineError> {
    let scene = simulate_scene(cfg)?;
    let (files, run_config) = write_fixture(&scene, dir)?;
    Ok(SimulationOutput {
        dir: dir.to_path_buf(),
        files,
        run_config,
        scene,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_charts_rejected() {
        let cfg = SceneConfig {
            distances: vec![],
            ..Default::default()
        };
        assert!(matches!(simulate_scene(&cfg), Err(PipelineError::Validation(_))));
    }

    #[test]
    fn white_patches_converge_to_veiling_color() {
        let s = simulate_scene(&SceneConfig::default()).unwrap();
        let white = s.chart.white_patch().unwrap().name.clone();
        let mut last = f64::INFINITY;
        for l in &s.chart_layouts {
            let stats = crate::chart::extract_patch_stats(&s.scene, l).unwrap();
            let m = stats.get(&white).unwrap().mean;
            let d = (0..3).map(|c| (m[c] - s.config.water.b_inf[c]).powi(2)).sum::<f64>().sqrt();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn fixture_is_byte_identical_for_a_seed() {
        let cfg = SceneConfig {
            noise_sigma: 0.002,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = simulate(&cfg, a.path()).unwrap();
        simulate(&cfg, b.path()).unwrap();
        for f in &oa.files {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{}",
                f.display()
            );
        }
        let other = tempfile::tempdir().unwrap();
        simulate(&SceneConfig { seed: 8, ..cfg }, other.path()).unwrap();
        assert_ne!(
            std::fs::read(a.path().join("scene.pfm")).unwrap(),
            std::fs::read(other.path().join("scene.pfm")).unwrap()
        );
    }

    #[test]
    fn run_config_round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let out = simulate(&SceneConfig::default(), dir.path()).unwrap();
        let cfg = crate::pipeline::load_config(&out.run_config, &[]).unwrap();
        assert_eq!(cfg.water.mode, WaterMode::Estimate);
        assert_eq!(cfg.water.observations.len(), 6);
        assert!(cfg.layout.is_absolute());
    }
}
