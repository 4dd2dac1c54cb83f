//! `uwcolor`: command-line front end.
//!
//! Exit codes: 0 success, 2 validation, 3 linearity abort, 4 recovery or
//! estimation failure, 5 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use uwcolor::assets;
use uwcolor::chart::{extract_patch_stats, ChartRecord, ChartRegistry, PatchLayout};
use uwcolor::colorimetry::{fit_chart_ccm, CmfSet};
use uwcolor::io::{self, pfm, spectra};
use uwcolor::linearity::{fit_linearity, linearity_from_exposure_series, LinearityThresholds};
use uwcolor::pipeline::config::{apply_overrides, parse_config_value};
use uwcolor::pipeline::{
    exit, load_config, render_report, run, simulate, white_observation, PipelineError, SceneConfig,
};
use uwcolor::spectral::{CameraModel, Spectrum, SpectrumKind};
use uwcolor::water::{
    estimate_attenuation, estimate_backscatter, remove_water, BackscatterOptions, DepthMap,
    WaterProperties, DEFAULT_DARK_FRACTION, DEFAULT_T_MIN, DEPTH_BINS,
};
use uwcolor::InputPolicy;

type CliResult = Result<i32, PipelineError>;

#[derive(Parser)]
#[command(name = "uwcolor", version, about = "Color measurement from linear underwater imagery")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic fixture set.
    Simulate {
        /// Scene config (TOML or JSON); defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a scene key, e.g. `--set noise_sigma=0.002`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Read a 16-bit PPM or PFM, report its digest and range, optionally re-emit as PFM.
    Ingest {
        image: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manage the chart registry.
    Chart {
        #[arg(long, default_value = "registry")]
        registry: PathBuf,
        #[command(subcommand)]
        action: ChartAction,
    },
    /// Verify that gray-patch responses are proportional to exposure.
    CheckLinearity(LinearityArgs),
    /// Fit backscatter and attenuation from a scene with a depth map.
    EstimateWater(EstimateArgs),
    /// Remove backscatter and attenuation with known water properties.
    RemoveWater {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        /// Water properties JSON.
        #[arg(long)]
        water: PathBuf,
        #[arg(long, default_value_t = DEFAULT_T_MIN)]
        t_min: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the recoverable mask (1 = recoverable).
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Fit the camera RGB to XYZ matrix from a chart capture.
    Calibrate {
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value = "D65")]
        illuminant: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full measurement workflow from a config file.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set thresholds.t_min=0.05`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Summarize provenance logs as a table.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ChartAction {
    /// Store a chart record JSON file, or the bundled chart with `--builtin`.
    Put {
        file: Option<PathBuf>,
        #[arg(long, value_name = "CHART_ID", conflicts_with = "file")]
        builtin: Option<String>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Print a chart record.
    Get { chart_id: String },
    /// List chart ids.
    List,
}

#[derive(Args)]
struct ChartArgs {
    #[arg(long, default_value = "registry")]
    registry: PathBuf,
    #[arg(long)]
    chart_id: String,
}

#[derive(Args)]
struct LinearityArgs {
    #[arg(long, requires_all = ["layout", "chart_id"], conflicts_with = "series")]
    image: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, default_value = "registry")]
    registry: PathBuf,
    #[arg(long)]
    chart_id: Option<String>,
    /// Built-in camera name or camera JSON; abscissa becomes simulated response.
    #[arg(long)]
    camera: Option<String>,
    #[arg(long, default_value = "D65")]
    illuminant: String,
    /// CSV of `exposure,value` rows for a single-channel exposure series.
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = LinearityThresholds::default().min_r_squared)]
    min_r_squared: f64,
    #[arg(long, default_value_t = LinearityThresholds::default().max_abs_intercept)]
    max_abs_intercept: f64,
    #[arg(long, default_value_t = LinearityThresholds::default().max_relative_deviation)]
    max_relative_deviation: f64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Reference capture of the chart (in air or at a known distance).
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    reference_layout: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    reference_z: f64,
    /// Layout of one chart in the scene; repeat for each chart.
    #[arg(long = "observation", required = true)]
    observations: Vec<PathBuf>,
    #[arg(long, default_value = "white")]
    white_patch: String,
    #[arg(long, default_value_t = DEFAULT_DARK_FRACTION)]
    dark_fraction: f64,
    /// Write the fitted properties here (JSON); printed otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Simulate {
            config,
            out,
            seed,
            overrides,
        } => cmd_simulate(config.as_deref(), &out, seed, &overrides),
        Command::Ingest { image, out } => cmd_ingest(&image, out.as_deref()),
        Command::Chart { registry, action } => cmd_chart(&registry, action),
        Command::CheckLinearity(a) => cmd_check_linearity(&a),
        Command::EstimateWater(a) => cmd_estimate_water(&a),
        Command::RemoveWater {
            image,
            depth,
            water,
            t_min,
            out,
            mask,
        } => cmd_remove_water(&image, &depth, &water, t_min, &out, mask.as_deref()),
        Command::Calibrate {
            chart,
            image,
            layout,
            illuminant,
            out,
        } => cmd_calibrate(&chart, &image, &layout, &illuminant, &out),
        Command::Run { config, overrides } => cmd_run(&config, &overrides),
        Command::Report { logs } => {
            print!("{}", render_report(&logs)?);
            Ok(exit::OK)
        }
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    Ok(io::write_atomic(path, bytes)?)
}

fn load_illuminant(spec: &str) -> Result<Spectrum, PipelineError> {
    match assets::builtin_illuminant(spec) {
        Some(s) => Ok(s),
        None => Ok(spectra::read_csv(Path::new(spec), SpectrumKind::Illuminant)?),
    }
}

fn load_camera(spec: &str) -> Result<CameraModel, PipelineError> {
    match assets::builtin_camera(spec) {
        Some(c) => Ok(c),
        None => Ok(spectra::read_camera(Path::new(spec))?),
    }
}

fn validation(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(e.to_string())
}

fn cmd_simulate(config: Option<&Path>, out: &Path, seed: Option<u64>, overrides: &[String]) -> CliResult {
    let mut value = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
            parse_config_value(&text, p)?
        }
        None => json!({}),
    };
    apply_overrides(&mut value, overrides)?;
    let mut scene: SceneConfig = serde_json::from_value(value).map_err(validation)?;
    if let Some(s) = seed {
        scene.seed = s;
    }
    let result = simulate(&scene, out)?;
    for f in &result.files {
        println!("{}", f.display());
    }
    Ok(exit::OK)
}

fn cmd_ingest(image: &Path, out: Option<&Path>) -> CliResult {
    let img = io::read_linear_image(image)?;
    let (lo, hi) = img
        .pixels()
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if let Some(out) = out {
        write_file(out, &pfm::encode(&pfm::PfmImage::from_linear_image(&img)))?;
    }
    print_json(&json!({
        "path": image,
        "sha256": io::file_digest(image)?,
        "width": img.width(),
        "height": img.height(),
        "state": img.state,
        "min": lo,
        "max": hi,
        "written": out,
    }));
    Ok(exit::OK)
}

fn cmd_chart(registry: &Path, action: ChartAction) -> CliResult {
    let reg = ChartRegistry::open(registry)?;
    match action {
        ChartAction::Put {
            file,
            builtin,
            overwrite,
        } => {
            let chart = match (file, builtin) {
                (Some(f), None) => ChartRecord::load(&f)?,
                (None, Some(id)) => assets::reference_chart(&id),
                _ => return Err(validation("give a chart file or --builtin <CHART_ID>")),
            };
            reg.put(&chart, overwrite)?;
            println!("{}", reg.path_for(&chart.chart_id).display());
        }
        ChartAction::Get { chart_id } => {
            let chart = reg.get(&chart_id)?;
            print_json(&serde_json::to_value(chart.to_document()).expect("chart serializes"));
        }
        ChartAction::List => {
            for id in reg.list()? {
                println!("{id}");
            }
        }
    }
    Ok(exit::OK)
}

fn cmd_check_linearity(a: &LinearityArgs) -> CliResult {
    let thresholds = LinearityThresholds {
        min_r_squared: a.min_r_squared,
        max_abs_intercept: a.max_abs_intercept,
        max_relative_deviation: a.max_relative_deviation,
    };
    let report = if let Some(series) = &a.series {
        let text = std::fs::read_to_string(series)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", series.display())))?;
        let values = parse_series(&text).map_err(|m| validation(format!("{}: {m}", series.display())))?;
        linearity_from_exposure_series(&values, thresholds)?
    } else {
        let (Some(image), Some(layout), Some(chart_id)) = (&a.image, &a.layout, &a.chart_id) else {
            return Err(validation("give --image, --layout and --chart-id, or --series"));
        };
        let chart = ChartRegistry::open(&a.registry)?.get(chart_id)?;
        let img = io::read_linear_image(image)?;
        let stats = extract_patch_stats(&img, &PatchLayout::load(layout)?)?;
        let camera = a.camera.as_deref().map(load_camera).transpose()?;
        fit_linearity(&stats, &chart, &load_illuminant(&a.illuminant)?, camera.as_ref(), thresholds)?
    };
    print!("{}", report.to_table());
    if let Some(svg) = &a.svg {
        write_file(svg, report.to_svg().as_bytes())?;
    }
    Ok(if report.passed() { exit::OK } else { exit::LINEARITY })
}

fn parse_series(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let parsed = match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) => k.parse::<f64>().ok().zip(v.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            // A non-numeric first line is a header.
            None if out.is_empty() && i == 0 => {}
            None => return Err(format!("line {}: expected `exposure,value`", i + 1)),
        }
    }
    Ok(out)
}

fn read_scene(image: &Path, depth: &Path) -> Result<(uwcolor::LinearImage, DepthMap), PipelineError> {
    let img = io::read_linear_image(image)?;
    let z = io::depth::read(depth, img.width(), img.height())?;
    z.require_matches(&img)?;
    Ok((img, z))
}

fn cmd_estimate_water(a: &EstimateArgs) -> CliResult {
    let policy = InputPolicy::RejectProcessed;
    let (img, depth) = read_scene(&a.image, &a.depth)?;
    let opts = BackscatterOptions {
        dark_fraction: a.dark_fraction,
        bins: DEPTH_BINS,
    };
    let bs = estimate_backscatter(&img, &depth, &opts, policy)?;
    let reference = io::read_linear_image(&a.reference)?;
    let ref_stats = extract_patch_stats(&reference, &PatchLayout::load(&a.reference_layout)?)?;
    let ref_white = ref_stats
        .get(&a.white_patch)
        .ok_or_else(|| validation(format!("reference layout has no `{}` patch", a.white_patch)))?
        .mean;
    let observations = a
        .observations
        .iter()
        .map(|p| {
            let layout = PatchLayout::load(p)?;
            white_observation(&img, &depth, &layout, &a.white_patch, ref_white, a.reference_z)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let att = estimate_attenuation(&observations, bs.beta_b, bs.b_inf)?;
    for w in &att.warnings {
        eprintln!("warning: {w}");
    }
    let fitted = WaterProperties::new(att.beta_d, bs.beta_b, bs.b_inf)?;
    let props = serde_json::to_vec_pretty(&fitted).expect("properties serialize");
    match &a.out {
        Some(out) => {
            write_file(out, &props)?;
            print_json(&json!({"properties": fitted, "backscatter": bs, "attenuation": att}));
        }
        None => println!("{}", String::from_utf8_lossy(&props)),
    }
    Ok(exit::OK)
}

fn cmd_remove_water(
    image: &Path,
    depth: &Path,
    water: &Path,
    t_min: f64,
    out: &Path,
    mask: Option<&Path>,
) -> CliResult {
    let (img, z) = read_scene(image, depth)?;
    let text = std::fs::read_to_string(water).map_err(|e| PipelineError::Io(format!("{}: {e}", water.display())))?;
    let w: WaterProperties =
        serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", water.display())))?;
    let (j, diag) = remove_water(&img, &z, &w, t_min, InputPolicy::RejectProcessed)?;
    write_file(out, &pfm::encode(&pfm::PfmImage::from_linear_image(&j)))?;
    if let Some(mask) = mask {
        let m = pfm::PfmImage {
            width: diag.width,
            height: diag.height,
            channels: 1,
            data: diag.recoverable.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect(),
        };
        write_file(mask, &pfm::encode(&m))?;
    }
    print_json(&json!(diag.summary));
    Ok(exit::OK)
}

fn cmd_calibrate(chart: &ChartArgs, image: &Path, layout: &Path, illuminant: &str, out: &Path) -> CliResult {
    let record = ChartRegistry::open(&chart.registry)?.get(&chart.chart_id)?;
    let img = io::read_linear_image(image)?;
    let stats = extract_patch_stats(&img, &PatchLayout::load(layout)?)?;
    let illum = load_illuminant(illuminant)?;
    let label = if assets::builtin_illuminant(illuminant).is_some() {
        illuminant.to_string()
    } else {
        Path::new(illuminant)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| illuminant.to_string())
    };
    let cal = fit_chart_ccm(&stats, &record, &illum, &label, &CmfSet::cie1931())?;
    write_file(out, &serde_json::to_vec_pretty(&cal).expect("calibration serializes"))?;
    println!("mean residual dE76 {:.4}", cal.residual);
    Ok(exit::OK)
}

fn cmd_run(config: &Path, overrides: &[String]) -> CliResult {
    let cfg = load_config(config, overrides)?;
    let outcome = run(&cfg)?;
    for img in &outcome.images {
        match &img.error {
            None => println!("{}: ok ({})", img.image_id, img.log_path.display()),
            Some(e) => println!("{}: aborted, exit {}: {e} ({})", img.image_id, img.exit_code, img.log_path.display()),
        }
    }
    Ok(outcome.exit_code())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_parsing() {
        assert_eq!(
            parse_series("exposure,value\n1,0.1\n2, 0.2\n\n# note\n3,0.3\n").unwrap(),
            vec![(1.0, 0.1), (2.0, 0.2), (3.0, 0.3)]
        );
        assert!(parse_series("1,0.1\nx,y\n").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
