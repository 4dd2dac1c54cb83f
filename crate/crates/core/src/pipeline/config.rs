//! Run configuration (TOML or JSON). Relative paths resolve against the
//! config file's directory; `--set key.path=value` overrides apply before
//! validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PipelineError;
use crate::assets;
use crate::chart::ChartRegistry;
use crate::io::spectra;
use crate::linearity::LinearityThresholds;
use crate::spectral::{CameraModel, Spectrum, SpectrumKind};
use crate::water::{DepthBinOverride, WaterProperties, DEFAULT_DARK_FRACTION, DEFAULT_T_MIN};

pub const DEFAULT_CHART_AGE_WARNING_DAYS: i64 = 365;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub registry: PathBuf,
    pub chart_id: String,
    /// Calibration chart rectangles in every input image.
    pub layout: PathBuf,
    pub images: Vec<ImageInput>,
    /// Built-in camera name or camera JSON path; enables the simulated-response
    /// abscissa for the linearity check.
    #[serde(default)]
    pub camera: Option<String>,
    /// Built-in illuminant name (`D65`, `E`) or spectrum CSV path.
    #[serde(default = "default_illuminant")]
    pub illuminant: String,
    #[serde(default)]
    pub illuminant_label: Option<String>,
    /// Chart capture used for the linearity check instead of the input image.
    #[serde(default)]
    pub linearity_frame: Option<FrameInput>,
    #[serde(default)]
    pub water: WaterConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Camera firmware, recorded verbatim.
    #[serde(default)]
    pub firmware: Option<String>,
    /// Opaque field-survey metadata, recorded verbatim.
    #[serde(default)]
    pub field_metadata: Option<Value>,
    #[serde(default)]
    pub display_png: bool,
    #[serde(default)]
    pub linearity_svg: bool,
    /// Continue after a failed linearity check (recorded as a warning).
    #[serde(default)]
    pub override_linearity: bool,
}

fn default_illuminant() -> String {
    "D65".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInput {
    /// Defaults to the file stem.
    #[serde(default)]
    pub id: Option<String>,
    pub path: PathBuf,
    #[serde(default)]
    pub depth: Option<PathBuf>,
}

impl ImageInput {
    pub fn image_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameInput {
    pub image: PathBuf,
    pub layout: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFrame {
    pub image: PathBuf,
    pub layout: PathBuf,
    /// Camera-to-chart distance of the reference capture; 0 means in air.
    #[serde(default)]
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaterMode {
    /// No water correction (in-air capture).
    #[default]
    None,
    Given,
    Estimate,
    /// Global white balance from the chart's white patch.
    Closeup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    Measured,
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaterSource {
    Inline(WaterProperties),
    File(PathBuf),
}

impl WaterSource {
    pub fn load(&self) -> Result<WaterProperties, PipelineError> {
        let w = match self {
            WaterSource::Inline(w) => *w,
            WaterSource::File(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| PipelineError::Validation(format!("{}: {e}", p.display())))?
            }
        };
        w.validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterConfig {
    #[serde(default)]
    pub mode: WaterMode,
    /// Required for `given`; in `estimate` mode these are the in-situ measured
    /// coefficients and `prefer` decides which set is applied.
    #[serde(default)]
    pub properties: Option<WaterSource>,
    #[serde(default)]
    pub prefer: Option<Preference>,
    #[serde(default = "default_dark_fraction")]
    pub dark_fraction: f64,
    /// Attenuation reference capture (`estimate`).
    #[serde(default)]
    pub reference: Option<ReferenceFrame>,
    /// Layouts of the charts placed through the scene (`estimate`).
    #[serde(default)]
    pub observations: Vec<PathBuf>,
    /// White-patch reflectance for `closeup`; defaults to the chart's value.
    #[serde(default)]
    pub white_reflectance: Option<f64>,
    #[serde(default)]
    pub depth_bins: Vec<DepthBinOverride>,
}

fn default_dark_fraction() -> f64 {
    DEFAULT_DARK_FRACTION
}

impl Default for WaterConfig {
    fn default() -> Self {
        Self {
            mode: WaterMode::None,
            properties: None,
            prefer: None,
            dark_fraction: DEFAULT_DARK_FRACTION,
            reference: None,
            observations: vec![],
            white_reflectance: None,
            depth_bins: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default)]
    pub linearity: LinearityThresholds,
    #[serde(default = "default_age")]
    pub chart_age_warning_days: i64,
}

fn default_t_min() -> f64 {
    DEFAULT_T_MIN
}

fn default_age() -> i64 {
    DEFAULT_CHART_AGE_WARNING_DAYS
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            t_min: DEFAULT_T_MIN,
            linearity: LinearityThresholds::default(),
            chart_age_warning_days: DEFAULT_CHART_AGE_WARNING_DAYS,
        }
    }
}

/// Parses TOML unless the extension is `.json`.
pub fn parse_config_value(text: &str, path: &Path) -> Result<Value, PipelineError> {
    let bad = |e: String| PipelineError::Validation(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }
}

/// Applies `a.b.c=value` assignments. Values parse as JSON when possible
/// (numbers, booleans, arrays, quoted strings), otherwise as a bare string.
pub fn apply_overrides(value: &mut Value, overrides: &[String]) -> Result<(), PipelineError> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| PipelineError::Validation(format!("override `{o}` is not key=value")))?;
        let parsed = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
        let mut cur = &mut *value;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(PipelineError::Validation(format!("override `{o}` has an empty key")));
            }
            let obj = match cur {
                Value::Object(m) => m,
                Value::Null => {
                    *cur = Value::Object(Default::default());
                    cur.as_object_mut().expect("just set")
                }
                _ => {
                    return Err(PipelineError::Validation(format!(
                        "override `{o}`: `{part}` is not inside a table"
                    )))
                }
            };
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), parsed.clone());
                break;
            }
            cur = obj.entry(part.to_string()).or_insert(Value::Null);
        }
    }
    Ok(())
}

/// Reads, overrides, resolves and validates a run configuration.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<PipelineConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    let mut value = parse_config_value(&text, path)?;
    apply_overrides(&mut value, overrides)?;
    let cfg: PipelineConfig = serde_json::from_value(value)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = std::fs::canonicalize(base)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", base.display())))?;
    let cfg = cfg.resolved(&base);
    cfg.validate()?;
    Ok(cfg)
}

fn is_builtin_camera(s: &str) -> bool {
    assets::builtin_camera(s).is_some()
}

fn is_builtin_illuminant(s: &str) -> bool {
    assets::builtin_illuminant(s).is_some()
}

impl PipelineConfig {
    /// Makes every relative path absolute against `base`.
    pub fn resolved(mut self, base: &Path) -> Self {
        let j = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        j(&mut self.output_dir);
        j(&mut self.registry);
        j(&mut self.layout);
        for img in &mut self.images {
            j(&mut img.path);
            if let Some(d) = &mut img.depth {
                j(d);
            }
        }
        if let Some(c) = &mut self.camera {
            if !is_builtin_camera(c) {
                *c = base.join(&*c).display().to_string();
            }
        }
        if !is_builtin_illuminant(&self.illuminant) {
            self.illuminant = base.join(&self.illuminant).display().to_string();
        }
        if let Some(f) = &mut self.linearity_frame {
            j(&mut f.image);
            j(&mut f.layout);
        }
        if let Some(WaterSource::File(p)) = &mut self.water.properties {
            j(p);
        }
        if let Some(r) = &mut self.water.reference {
            j(&mut r.image);
            j(&mut r.layout);
        }
        for p in &mut self.water.observations {
            j(p);
        }
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Validation(m));
        let file = |p: &Path, what: &str| -> Result<(), PipelineError> {
            if p.is_file() {
                Ok(())
            } else {
                Err(PipelineError::Validation(format!("{what} `{}` does not exist", p.display())))
            }
        };
        if self.images.is_empty() {
            return fail("no input images".into());
        }
        let mut ids: Vec<String> = self.images.iter().map(ImageInput::image_id).collect();
        for (img, id) in self.images.iter().zip(&ids) {
            if !crate::chart::valid_id(id) {
                return fail(format!("image id `{id}` must use only [A-Za-z0-9._-]"));
            }
            file(&img.path, "image")?;
            if let Some(d) = &img.depth {
                file(d, "depth map")?;
            } else if matches!(self.water.mode, WaterMode::Given | WaterMode::Estimate) {
                return fail(format!("image `{id}` needs a depth map for water mode {:?}", self.water.mode));
            }
        }
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return fail(format!("duplicate image id `{}`", w[0]));
        }
        file(&self.layout, "layout")?;
        if !self.registry.is_dir() {
            return fail(format!("registry `{}` is not a directory", self.registry.display()));
        }
        if !crate::chart::valid_id(&self.chart_id) {
            return fail(format!("invalid chart id `{}`", self.chart_id));
        }
        let reg = ChartRegistry::open(&self.registry)?;
        file(&reg.path_for(&self.chart_id), "registry chart")?;
        if let Some(c) = &self.camera {
            if !is_builtin_camera(c) {
                file(Path::new(c), "camera")?;
            }
        }
        if !is_builtin_illuminant(&self.illuminant) {
            file(Path::new(&self.illuminant), "illuminant")?;
        }
        if let Some(f) = &self.linearity_frame {
            file(&f.image, "linearity frame")?;
            file(&f.layout, "linearity frame layout")?;
        }

        let t = &self.thresholds;
        if !(t.t_min > 0.0 && t.t_min < 1.0) {
            return fail(format!("thresholds.t_min must be in (0, 1), got {}", t.t_min));
        }
        let l = &t.linearity;
        if !(l.min_r_squared > 0.0 && l.min_r_squared <= 1.0) {
            return fail(format!("linearity.min_r_squared must be in (0, 1], got {}", l.min_r_squared));
        }
        if !(l.max_abs_intercept >= 0.0 && l.max_abs_intercept.is_finite()) {
            return fail(format!("linearity.max_abs_intercept must be >= 0, got {}", l.max_abs_intercept));
        }
        if !(l.max_relative_deviation > 0.0 && l.max_relative_deviation.is_finite()) {
            return fail(format!(
                "linearity.max_relative_deviation must be > 0, got {}",
                l.max_relative_deviation
            ));
        }
        if t.chart_age_warning_days < 0 {
            return fail(format!("chart_age_warning_days must be >= 0, got {}", t.chart_age_warning_days));
        }

        let w = &self.water;
        if !(w.dark_fraction > 0.0 && w.dark_fraction <= 1.0) {
            return fail(format!("water.dark_fraction must be in (0, 1], got {}", w.dark_fraction));
        }
        if let Some(WaterSource::File(p)) = &w.properties {
            file(p, "water properties")?;
        }
        if let Some(WaterSource::Inline(p)) = &w.properties {
            p.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        }
        match w.mode {
            WaterMode::Given if w.properties.is_none() => {
                return fail("water mode `given` requires water.properties".into())
            }
            WaterMode::Estimate => {
                let Some(r) = &w.reference else {
                    return fail("water mode `estimate` requires water.reference".into());
                };
                file(&r.image, "water reference image")?;
                file(&r.layout, "water reference layout")?;
                if !(r.z >= 0.0 && r.z.is_finite()) {
                    return fail(format!("water.reference.z must be >= 0, got {}", r.z));
                }
                if w.observations.len() < 2 {
                    return fail("water mode `estimate` needs at least two observation layouts".into());
                }
                for o in &w.observations {
                    file(o, "observation layout")?;
                }
                if w.properties.is_some() && w.prefer.is_none() {
                    return fail(
                        "both measured water.properties and a fit are configured; set water.prefer \
                         to `measured` or `fitted`"
                            .into(),
                    );
                }
            }
            _ => {}
        }
        if let Some(r) = w.white_reflectance {
            if !(r > 0.0 && r <= 1.0) {
                return fail(format!("water.white_reflectance must be in (0, 1], got {r}"));
            }
        }
        if let Some(m) = &self.field_metadata {
            if !m.is_object() {
                return fail("field_metadata must be a table/object".into());
            }
        }
        Ok(())
    }

    /// The effective configuration as JSON (defaults expanded).
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn load_camera(&self) -> Result<Option<CameraModel>, PipelineError> {
        match &self.camera {
            None => Ok(None),
            Some(c) => match assets::builtin_camera(c) {
                Some(cam) => Ok(Some(cam)),
                None => Ok(Some(spectra::read_camera(Path::new(c))?)),
            },
        }
    }

    /// The illuminant spectrum and the label recorded with the calibration.
    pub fn load_illuminant(&self) -> Result<(Spectrum, String), PipelineError> {
        let spectrum = match assets::builtin_illuminant(&self.illuminant) {
            Some(s) => s,
            None => spectra::read_csv(Path::new(&self.illuminant), SpectrumKind::Illuminant)?,
        };
        let label = self.illuminant_label.clone().unwrap_or_else(|| {
            Path::new(&self.illuminant)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.illuminant.clone())
        });
        Ok((spectrum, label))
    }
}

/// Drops `null`s so the value can be written as TOML.
pub fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.into_iter().map(strip_nulls).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_nest_and_parse() {
        let mut v = json!({"thresholds": {"t_min": 0.02}, "chart_id": "A"});
        apply_overrides(
            &mut v,
            &[
                "thresholds.t_min=0.05".into(),
                "chart_id=B-2".into(),
                "water.mode=\"closeup\"".into(),
                "display_png=true".into(),
            ],
        )
        .unwrap();
        assert_eq!(v["thresholds"]["t_min"], json!(0.05));
        assert_eq!(v["chart_id"], json!("B-2"));
        assert_eq!(v["water"]["mode"], json!("closeup"));
        assert_eq!(v["display_png"], json!(true));
        assert!(apply_overrides(&mut v, &["noequals".into()]).is_err());
        assert!(apply_overrides(&mut v, &["chart_id.x=1".into()]).is_err());
    }

    #[test]
    fn defaults_expand() {
        let v = json!({
            "output_dir": "out", "registry": "reg", "chart_id": "A", "layout": "l.json",
            "images": [{"path": "a.pfm"}]
        });
        let cfg: PipelineConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.thresholds, Thresholds::default());
        assert_eq!(cfg.water.mode, WaterMode::None);
        assert_eq!(cfg.illuminant, "D65");
        let full = cfg.to_value();
        assert_eq!(full["thresholds"]["linearity"]["min_r_squared"], json!(0.995));
        assert_eq!(full["water"]["dark_fraction"], json!(0.01));
        assert_eq!(cfg.images[0].image_id(), "a");
    }

    #[test]
    fn unknown_keys_rejected() {
        let v = json!({
            "output_dir": "out", "registry": "reg", "chart_id": "A", "layout": "l.json",
            "images": [], "colour": 1
        });
        assert!(serde_json::from_value::<PipelineConfig>(v).is_err());
    }

    #[test]
    fn toml_parses_to_same_value() {
        let t = r#"
            output_dir = "out"
            registry = "reg"
            chart_id = "A"
            layout = "l.json"
            [[images]]
            path = "a.pfm"
            [water]
            mode = "given"
            properties = { beta_D = [0.5, 0.2, 0.3], beta_B = [0.3, 0.2, 0.3], B_inf = [0.0, 0.1, 0.1] }
            [field_metadata]
            site = "reef 3"
        "#;
        let v = parse_config_value(t, Path::new("run.toml")).unwrap();
        let cfg: PipelineConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.water.mode, WaterMode::Given);
        assert!(matches!(cfg.water.properties, Some(WaterSource::Inline(_))));
        assert_eq!(cfg.field_metadata.unwrap()["site"], json!("reef 3"));
    }
}
