//! The measurement run: ingest → patch statistics → linearity → water →
//! chart calibration → XYZ → linear standard RGB, one provenance log per image.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ImageInput, PipelineConfig, Preference, WaterMode};
use super::provenance::{ChartProvenance, ProvenanceBuilder, ProvenanceLog, StageStatus};
use super::{exit, PipelineError};
use crate::chart::{extract_patch_stats, ChartRecord, ChartRegistry, PatchLayout, PatchStats};
use crate::colorimetry::{
    camera_to_xyz, chart_targets, delta_e76, fit_chart_ccm, xyz_image_to_standard_rgb, xyz_to_lab,
    CmfSet,
};
use crate::image::{InputPolicy, LinearImage};
use crate::io::{self, pfm};
use crate::linearity::fit_linearity;
use crate::spectral::{CameraModel, Spectrum};
use crate::water::{
    closeup_white_balance, estimate_attenuation, estimate_backscatter, remove_water,
    remove_water_binned, AttenuationObservation, BackscatterOptions, DepthMap, RecoveryDiagnostics,
    WaterProperties, DEPTH_BINS,
};

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub image_id: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub log_path: PathBuf,
    pub log: ProvenanceLog,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub images: Vec<ImageOutcome>,
}

impl RunOutcome {
    /// The first non-zero image exit code, in config order.
    pub fn exit_code(&self) -> i32 {
        self.images
            .iter()
            .map(|i| i.exit_code)
            .find(|c| *c != exit::OK)
            .unwrap_or(exit::OK)
    }
}

struct Context {
    chart: ChartRecord,
    layout: PatchLayout,
    camera: Option<CameraModel>,
    illuminant: Spectrum,
    illuminant_label: String,
    cmf: CmfSet,
    shared_inputs: Vec<(String, PathBuf, String)>,
    today: NaiveDate,
}

type Staged<T> = Result<T, (&'static str, PipelineError)>;

fn at<E: Into<PipelineError>>(stage: &'static str) -> impl FnOnce(E) -> (&'static str, PipelineError) {
    move |e| (stage, e.into())
}

fn digest(path: &Path) -> Result<String, PipelineError> {
    Ok(io::file_digest(path)?)
}

impl Context {
    fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let registry = ChartRegistry::open(&cfg.registry)?;
        let chart = registry.get(&cfg.chart_id)?;
        chart.require_calibrated()?;
        let layout = PatchLayout::load(&cfg.layout)?;
        let camera = cfg.load_camera()?;
        let (illuminant, illuminant_label) = cfg.load_illuminant()?;
        let mut shared_inputs = vec![];
        let chart_path = registry.path_for(&cfg.chart_id);
        shared_inputs.push(("chart_record".into(), chart_path.clone(), digest(&chart_path)?));
        shared_inputs.push(("layout".into(), cfg.layout.clone(), digest(&cfg.layout)?));
        if let Some(c) = &cfg.camera {
            let p = PathBuf::from(c);
            if p.is_file() {
                shared_inputs.push(("camera".into(), p.clone(), digest(&p)?));
            }
        }
        let ip = PathBuf::from(&cfg.illuminant);
        if ip.is_file() {
            shared_inputs.push(("illuminant".into(), ip.clone(), digest(&ip)?));
        }
        Ok(Self {
            chart,
            layout,
            camera,
            illuminant,
            illuminant_label,
            cmf: CmfSet::cie1931(),
            shared_inputs,
            today: chrono::Local::now().date_naive(),
        })
    }
}

/// Runs every configured image (concurrently) and writes one provenance log each.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    let ctx = Context::load(cfg);
    let config_value = cfg.to_value();
    let images = cfg
        .images
        .par_iter()
        .map(|input| run_image(cfg, &config_value, &ctx, input))
        .collect();
    Ok(RunOutcome { images })
}

fn run_image(
    cfg: &PipelineConfig,
    config_value: &Value,
    ctx: &Result<Context, PipelineError>,
    input: &ImageInput,
) -> ImageOutcome {
    let image_id = input.image_id();
    let mut b = ProvenanceBuilder::new(&image_id, config_value.clone());
    let result = match ctx {
        Ok(ctx) => process(cfg, ctx, input, &image_id, &mut b),
        Err(e) => Err(("setup", e.clone())),
    };
    let (log, mut exit_code, mut error) = match result {
        Ok(()) => (b.complete(), exit::OK, None),
        Err((stage, e)) => {
            log::error!("{image_id}: {stage}: {e}");
            (b.abort(stage, &e), e.exit_code(), Some(format!("{stage}: {e}")))
        }
    };
    let log_path = cfg.output_dir.join(format!("{image_id}.provenance.json"));
    let bytes = serde_json::to_vec_pretty(&log).expect("log serializes");
    if let Err(e) = io::write_atomic(&log_path, &bytes) {
        exit_code = exit::IO;
        error = Some(format!("writing provenance log: {e}"));
    }
    ImageOutcome {
        image_id,
        exit_code,
        error,
        log_path,
        log,
    }
}

fn emit(
    b: &mut ProvenanceBuilder,
    dir: &Path,
    name: String,
    role: &str,
    bytes: &[u8],
) -> Result<(), PipelineError> {
    io::write_atomic(&dir.join(&name), bytes)?;
    b.output(role, &name, io::sha256_hex(bytes));
    Ok(())
}

fn pfm_bytes(img: &LinearImage) -> Vec<u8> {
    pfm::encode(&pfm::PfmImage::from_linear_image(img))
}

fn read_image(b: &mut ProvenanceBuilder, role: &str, path: &Path) -> Result<LinearImage, PipelineError> {
    let img = io::read_linear_image(path)?;
    b.input(role, path, digest(path)?);
    Ok(img)
}

fn load_layout(b: &mut ProvenanceBuilder, role: &str, path: &Path) -> Result<PatchLayout, PipelineError> {
    let l = PatchLayout::load(path)?;
    b.input(role, path, digest(path)?);
    Ok(l)
}

fn clipped_warnings(b: &mut ProvenanceBuilder, stats: &PatchStats, what: &str) {
    for p in stats.patches.iter().filter(|p| p.clipped_fraction > 0.0) {
        b.warn(format!(
            "{what}: patch `{}` has {:.1}% clipped pixels",
            p.name,
            100.0 * p.clipped_fraction
        ));
    }
}

fn process(
    cfg: &PipelineConfig,
    ctx: &Context,
    input: &ImageInput,
    id: &str,
    b: &mut ProvenanceBuilder,
) -> Staged<()> {
    let policy = InputPolicy::RejectProcessed;
    let out = &cfg.output_dir;
    for (role, path, sha) in &ctx.shared_inputs {
        b.input(role, path, sha.clone());
    }
    b.illuminant(&ctx.illuminant_label);

    let cal_entry = ctx.chart.require_calibrated().map_err(at("setup"))?;
    let age = (ctx.today - cal_entry.date).num_days();
    b.chart(ChartProvenance {
        chart_id: ctx.chart.chart_id.clone(),
        calibration_date: cal_entry.date.to_string(),
        age_days: age,
        operator: cal_entry.operator.clone(),
        instrument: cal_entry.instrument.clone(),
        spectra_file: cal_entry.spectra_file.clone(),
        reflectance_source: format!("{:?}", ctx.chart.reflectance_source).to_lowercase(),
    });
    if age > cfg.thresholds.chart_age_warning_days {
        b.warn(format!(
            "chart `{}` was last calibrated {} ({age} days ago), beyond the {}-day warning threshold",
            ctx.chart.chart_id, cal_entry.date, cfg.thresholds.chart_age_warning_days
        ));
    }

    // Ingest.
    let img = read_image(b, "image", &input.path).map_err(at("ingest"))?;
    let depth = match &input.depth {
        Some(p) => {
            let d = io::depth::read(p, img.width(), img.height()).map_err(at("ingest"))?;
            d.require_matches(&img).map_err(at("ingest"))?;
            b.input("depth", p, digest(p).map_err(at("ingest"))?);
            Some(d)
        }
        None => None,
    };
    let (lo, hi) = img
        .pixels()
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    b.stage(
        "ingest",
        StageStatus::Ok,
        json!({"path": input.path, "depth": input.depth}),
        json!({"width": img.width(), "height": img.height(), "min": lo, "max": hi,
               "depth_valid_pixels": depth.as_ref().map(DepthMap::valid_count)}),
    );

    // Patch extraction.
    let stats = extract_patch_stats(&img, &ctx.layout).map_err(at("patch_extraction"))?;
    clipped_warnings(b, &stats, "input");
    b.stage(
        "patch_extraction",
        StageStatus::Ok,
        json!({"trim_fraction": crate::chart::TRIM_FRACTION, "margin_frac": ctx.layout.margin_frac}),
        json!({"patches": stats.patches.len()}),
    );

    // Linearity.
    let lin_stats = match &cfg.linearity_frame {
        Some(f) => {
            let frame = read_image(b, "linearity_frame", &f.image).map_err(at("linearity"))?;
            let layout = load_layout(b, "linearity_frame_layout", &f.layout).map_err(at("linearity"))?;
            extract_patch_stats(&frame, &layout).map_err(at("linearity"))?
        }
        None => stats.clone(),
    };
    let report = fit_linearity(
        &lin_stats,
        &ctx.chart,
        &ctx.illuminant,
        ctx.camera.as_ref(),
        cfg.thresholds.linearity,
    )
    .map_err(at("linearity"))?;
    for w in &report.warnings {
        b.warn(format!("linearity: {w}"));
    }
    b.summary().linearity_verdict = Some(if report.passed() { "pass" } else { "fail" }.into());
    let lin_params = json!({
        "source": if cfg.linearity_frame.is_some() { "linearity_frame" } else { "image" },
        "thresholds": cfg.thresholds.linearity,
        "abscissa": report.abscissa,
        "override": cfg.override_linearity,
    });
    let lin_outcome = json!({"verdict": report.verdict, "channels": report.channels});
    if !report.passed() {
        let worst = report
            .channels
            .iter()
            .map(|c| c.max_relative_deviation)
            .fold(0.0, f64::max);
        let msg = format!(
            "sensor response is not proportional to exposure (max relative deviation {worst:.4}); \
             the input is not a linear RAW-derived image"
        );
        if cfg.override_linearity {
            b.warn(format!("linearity override in effect: {msg}"));
            b.stage("linearity", StageStatus::Warning, lin_params, lin_outcome);
        } else {
            b.stage("linearity", StageStatus::Failed, lin_params, lin_outcome);
            return Err(("linearity", PipelineError::Linearity(msg)));
        }
    } else {
        b.stage("linearity", StageStatus::Ok, lin_params, lin_outcome);
    }
    if cfg.linearity_svg {
        emit(b, out, format!("{id}.linearity.svg"), "linearity_plot", report.to_svg().as_bytes())
            .map_err(at("linearity"))?;
    }

    // Water.
    let white_name = ctx
        .chart
        .white_patch()
        .map(|p| p.name.clone())
        .ok_or_else(|| ("water", PipelineError::Validation("chart has no achromatic patch".into())))?;
    let water_mode = cfg.water.mode;
    b.summary().water_mode = Some(format!("{water_mode:?}").to_lowercase());
    let mut water_diag = json!({"mode": water_mode});
    let mut recovery: Option<RecoveryDiagnostics> = None;
    let corrected = match water_mode {
        WaterMode::None => {
            b.stage("water", StageStatus::Skipped, json!({"mode": "none"}), Value::Null);
            img.clone()
        }
        WaterMode::Closeup => {
            let white = stats.get(&white_name).ok_or_else(|| {
                ("water", PipelineError::Validation(format!("white patch `{white_name}` not in layout")))
            })?;
            let refl = cfg.water.white_reflectance.unwrap_or_else(|| {
                ctx.chart.patch(&white_name).expect("white is on chart").reflectance.grid_mean()
            });
            let (j, gains) = closeup_white_balance(&img, white, refl, policy).map_err(at("water"))?;
            b.stage(
                "water",
                StageStatus::Ok,
                json!({"mode": "closeup", "white_patch": white_name, "white_reflectance": refl}),
                json!({"gains": gains}),
            );
            water_diag["gains"] = json!(gains);
            j
        }
        WaterMode::Given | WaterMode::Estimate => {
            let depth = depth.as_ref().expect("validated: depth present");
            let w = if water_mode == WaterMode::Given {
                cfg.water
                    .properties
                    .as_ref()
                    .expect("validated")
                    .load()
                    .map_err(at("water"))?
            } else {
                let fitted = estimate_water(cfg, b, &img, depth, &white_name, &mut water_diag)?;
                match (&cfg.water.properties, cfg.water.prefer) {
                    (Some(m), Some(Preference::Measured)) => {
                        let m = m.load().map_err(at("water"))?;
                        water_diag["measured"] = json!(m);
                        water_diag["applied"] = json!("measured");
                        m
                    }
                    (Some(m), _) => {
                        water_diag["measured"] = json!(m.load().map_err(at("water"))?);
                        water_diag["applied"] = json!("fitted");
                        fitted
                    }
                    (None, _) => fitted,
                }
            };
            let t_min = cfg.thresholds.t_min;
            let (j, diag) = if cfg.water.depth_bins.is_empty() {
                remove_water(&img, depth, &w, t_min, policy)
            } else {
                remove_water_binned(&img, depth, &w, &cfg.water.depth_bins, t_min, policy)
            }
            .map_err(at("water"))?;
            water_diag["properties"] = json!(w);
            water_diag["recovery"] = json!(diag.summary);
            b.summary().recoverable_fraction = Some(diag.summary.recoverable_fraction);
            let chart_bad = unrecoverable_in_layout(&diag, &ctx.layout);
            if chart_bad > 0 {
                b.warn(format!(
                    "{chart_bad} calibration-chart pixels are below the transmission threshold; \
                     the chart fit uses flagged values"
                ));
            }
            if diag.summary.clamped_pixels > 0 {
                b.warn(format!("{} pixels were clamped during water removal", diag.summary.clamped_pixels));
            }
            b.stage(
                "water",
                StageStatus::Ok,
                json!({"mode": water_mode, "t_min": t_min, "properties": w,
                       "depth_bins": cfg.water.depth_bins}),
                json!(diag.summary),
            );
            recovery = Some(diag);
            j
        }
    };
    if let Some(diag) = &recovery {
        let mask = LinearImage::from_pixels(
            diag.width,
            diag.height,
            diag.recoverable.iter().map(|&r| [if r { 1.0 } else { 0.0 }; 3]).collect(),
            corrected.state,
        )
        .expect("sized");
        let single = pfm::PfmImage {
            width: mask.width(),
            height: mask.height(),
            channels: 1,
            data: mask.pixels().iter().map(|p| p[0] as f32).collect(),
        };
        emit(b, out, format!("{id}.recoverable.pfm"), "recoverable_mask", &pfm::encode(&single))
            .map_err(at("water"))?;
    }

    // Chart calibration.
    let cal_stats = extract_patch_stats(&corrected, &ctx.layout).map_err(at("calibration"))?;
    clipped_warnings(b, &cal_stats, "water-corrected");
    let cal = fit_chart_ccm(&cal_stats, &ctx.chart, &ctx.illuminant, &ctx.illuminant_label, &ctx.cmf)
        .map_err(at("calibration"))?;
    b.summary().calibration_residual = Some(cal.residual);
    b.stage(
        "calibration",
        StageStatus::Ok,
        json!({"source": cal.source, "white_constraint": white_name, "illuminant": ctx.illuminant_label}),
        json!({"matrix": cal.matrix, "white_point": cal.white_point, "residual_mean_delta_e76": cal.residual}),
    );
    let cal_json = serde_json::to_vec_pretty(&cal).expect("calibration serializes");
    emit(b, out, format!("{id}.calibration.json"), "calibration", &cal_json).map_err(at("calibration"))?;

    // Color transformation.
    let xyz = camera_to_xyz(&corrected, &cal, policy).map_err(at("color_transform"))?;
    let xyz_stats = extract_patch_stats(&xyz, &ctx.layout).map_err(at("color_transform"))?;
    let targets = chart_targets(&ctx.chart, &ctx.illuminant, &ctx.cmf).map_err(at("color_transform"))?;
    let mut patch_de = Vec::new();
    for (name, target) in &targets {
        if let Some(s) = xyz_stats.get(name) {
            let de = delta_e76(
                xyz_to_lab(s.mean, cal.white_point).map_err(at("color_transform"))?,
                xyz_to_lab(*target, cal.white_point).map_err(at("color_transform"))?,
            );
            patch_de.push(json!({"name": name, "xyz": s.mean, "target_xyz": target, "delta_e76": de}));
        }
    }
    let mean_de = patch_de.iter().filter_map(|p| p["delta_e76"].as_f64()).sum::<f64>()
        / patch_de.len().max(1) as f64;
    b.summary().mean_patch_delta_e = Some(mean_de);
    let (srgb, out_of_gamut) = xyz_image_to_standard_rgb(&xyz, false).map_err(at("color_transform"))?;
    if out_of_gamut > 0 {
        b.warn(format!(
            "{out_of_gamut} pixels fall outside the standard RGB gamut (preserved in the linear output)"
        ));
    }
    b.stage(
        "color_transform",
        StageStatus::Ok,
        json!({"target": "linear standard RGB (IEC 61966-2-1, D65)", "encode": false}),
        json!({"mean_patch_delta_e76": mean_de, "out_of_gamut_pixels": out_of_gamut}),
    );

    // Outputs.
    emit(b, out, format!("{id}.xyz.pfm"), "xyz", &pfm_bytes(&xyz)).map_err(at("output"))?;
    emit(b, out, format!("{id}.srgb-linear.pfm"), "srgb_linear", &pfm_bytes(&srgb)).map_err(at("output"))?;
    if cfg.display_png {
        let (display, _) = xyz_image_to_standard_rgb(&xyz, true).map_err(at("output"))?;
        let name = format!("{id}.display.png");
        let path = out.join(&name);
        io::png::write_display(&path, &display).map_err(at("output"))?;
        b.output("display_png_non_scientific", &name, digest(&path).map_err(at("output"))?);
    }
    let diagnostics = json!({
        "image_id": id,
        "patch_stats": stats,
        "linearity": report,
        "water": water_diag,
        "calibration": cal,
        "patches": patch_de,
        "mean_patch_delta_e76": mean_de,
        "out_of_gamut_pixels": out_of_gamut,
    });
    emit(
        b,
        out,
        format!("{id}.diagnostics.json"),
        "diagnostics",
        &serde_json::to_vec_pretty(&diagnostics).expect("diagnostics serialize"),
    )
    .map_err(at("output"))?;
    Ok(())
}

fn unrecoverable_in_layout(diag: &RecoveryDiagnostics, layout: &PatchLayout) -> usize {
    let mut n = 0;
    for rect in &layout.patches {
        if let Some((x0, y0, x1, y1)) = layout.inner_rect(rect) {
            for y in y0..y1 {
                n += (x0..x1).filter(|&x| !diag.recoverable[y * diag.width + x]).count();
            }
        }
    }
    n
}

fn estimate_water(
    cfg: &PipelineConfig,
    b: &mut ProvenanceBuilder,
    img: &LinearImage,
    depth: &DepthMap,
    white_name: &str,
    water_diag: &mut Value,
) -> Staged<WaterProperties> {
    let policy = InputPolicy::RejectProcessed;
    let opts = BackscatterOptions {
        dark_fraction: cfg.water.dark_fraction,
        bins: DEPTH_BINS,
    };
    let bs = estimate_backscatter(img, depth, &opts, policy).map_err(at("water_estimation"))?;
    let reference = cfg.water.reference.as_ref().expect("validated");
    let ref_img = read_image(b, "water_reference", &reference.image).map_err(at("water_estimation"))?;
    let ref_layout =
        load_layout(b, "water_reference_layout", &reference.layout).map_err(at("water_estimation"))?;
    let ref_stats = extract_patch_stats(&ref_img, &ref_layout).map_err(at("water_estimation"))?;
    let ref_white = ref_stats.get(white_name).ok_or_else(|| {
        (
            "water_estimation",
            PipelineError::Validation(format!("reference layout has no `{white_name}` patch")),
        )
    })?;
    let mut observations = Vec::new();
    for path in &cfg.water.observations {
        let layout = load_layout(b, "observation_layout", path).map_err(at("water_estimation"))?;
        let obs = white_observation(img, depth, &layout, white_name, ref_white.mean, reference.z)
            .map_err(|e| ("water_estimation", prefix(path, e)))?;
        observations.push(obs);
    }
    let att = estimate_attenuation(&observations, bs.beta_b, bs.b_inf).map_err(at("water_estimation"))?;
    for w in &att.warnings {
        b.warn(format!("attenuation: {w}"));
    }
    let fitted = WaterProperties::new(att.beta_d, bs.beta_b, bs.b_inf).map_err(at("water_estimation"))?;
    b.stage(
        "water_estimation",
        StageStatus::Ok,
        json!({"dark_fraction": opts.dark_fraction, "bins": opts.bins,
               "reference_z": reference.z, "observations": observations.len()}),
        json!({"fitted": fitted, "backscatter_rms": bs.rms_residual,
               "attenuation_used": att.used, "rejected": att.rejected}),
    );
    water_diag["backscatter_fit"] = json!(bs);
    water_diag["attenuation_fit"] = json!(att);
    water_diag["observations"] = json!(observations);
    water_diag["fitted"] = json!(fitted);
    Ok(fitted)
}

fn prefix(path: &Path, e: PipelineError) -> PipelineError {
    let p = path.display();
    match e {
        PipelineError::Validation(m) => PipelineError::Validation(format!("{p}: {m}")),
        PipelineError::Linearity(m) => PipelineError::Linearity(format!("{p}: {m}")),
        PipelineError::Recovery(m) => PipelineError::Recovery(format!("{p}: {m}")),
        PipelineError::Io(m) => PipelineError::Io(format!("{p}: {m}")),
    }
}

/// One attenuation observation: the white patch of `layout` in `img`, at the
/// median distance under that patch, against a reference white reading.
pub fn white_observation(
    img: &LinearImage,
    depth: &DepthMap,
    layout: &PatchLayout,
    white_name: &str,
    reference: [f64; 3],
    reference_z: f64,
) -> Result<AttenuationObservation, PipelineError> {
    let missing = || PipelineError::Validation(format!("no `{white_name}` patch in layout"));
    let rect = layout.rect(white_name).ok_or_else(missing)?;
    let (x0, y0, x1, y1) = layout
        .inner_rect(rect)
        .ok_or_else(|| PipelineError::Validation("empty white region".into()))?;
    let stats = extract_patch_stats(img, layout)?;
    let z = depth
        .region_median(x0, y0, x1, y1)
        .ok_or_else(|| PipelineError::Validation("no valid depth under the white patch".into()))?;
    Ok(AttenuationObservation {
        rgb: stats.get(white_name).ok_or_else(missing)?.mean,
        z,
        reference,
        reference_z,
    })
}
