//! Per-image provenance logs.
//!
//! A log is built append-only through [`ProvenanceBuilder`] and written once,
//! whether the run completed or aborted.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PipelineError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "uwcolor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Warning,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    pub data_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartProvenance {
    pub chart_id: String,
    pub calibration_date: String,
    pub age_days: i64,
    pub operator: String,
    pub instrument: String,
    pub spectra_file: String,
    pub reflectance_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub parameters: Value,
    pub outcome: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub linearity_verdict: Option<String>,
    pub water_mode: Option<String>,
    pub recoverable_fraction: Option<f64>,
    pub calibration_residual: Option<f64>,
    pub mean_patch_delta_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub stage: String,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceLog {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub image_id: String,
    pub status: RunStatus,
    pub started_at: String,
    pub finished_at: String,
    pub config: Value,
    pub inputs: Vec<FileRecord>,
    pub chart: Option<ChartProvenance>,
    pub illuminant: Option<String>,
    pub camera_firmware: Option<String>,
    pub field_metadata: Option<Value>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<FileRecord>,
    pub summary: RunSummary,
    pub warnings: Vec<String>,
    pub error: Option<ErrorRecord>,
}

/// Keys whose values legitimately differ between identical runs.
pub const TIMESTAMP_KEYS: [&str; 2] = ["started_at", "finished_at"];

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Append-only accumulator for one image's log.
#[derive(Debug)]
pub struct ProvenanceBuilder {
    log: ProvenanceLog,
}

impl ProvenanceBuilder {
    pub fn new(image_id: &str, config: Value) -> Self {
        let firmware = config.get("firmware").and_then(Value::as_str).map(String::from);
        let field = config.get("field_metadata").filter(|v| !v.is_null()).cloned();
        Self {
            log: ProvenanceLog {
                schema_version: SCHEMA_VERSION,
                tool: ToolInfo {
                    name: TOOL_NAME.into(),
                    version: crate::VERSION.into(),
                    data_version: crate::assets::DATA_VERSION.into(),
                },
                image_id: image_id.into(),
                status: RunStatus::Aborted,
                started_at: now(),
                finished_at: String::new(),
                config,
                inputs: vec![],
                chart: None,
                illuminant: None,
                camera_firmware: firmware,
                field_metadata: field,
                stages: vec![],
                outputs: vec![],
                summary: RunSummary::default(),
                warnings: vec![],
                error: None,
            },
        }
    }

    pub fn input(&mut self, role: &str, path: &std::path::Path, sha256: String) {
        self.log.inputs.push(FileRecord {
            role: role.into(),
            path: path.display().to_string(),
            sha256,
        });
    }

    pub fn output(&mut self, role: &str, file_name: &str, sha256: String) {
        self.log.outputs.push(FileRecord {
            role: role.into(),
            path: file_name.into(),
            sha256,
        });
    }

    pub fn chart(&mut self, chart: ChartProvenance) {
        self.log.chart = Some(chart);
    }

    pub fn illuminant(&mut self, label: &str) {
        self.log.illuminant = Some(label.into());
    }

    pub fn stage(&mut self, name: &str, status: StageStatus, parameters: Value, outcome: Value) {
        self.log.stages.push(StageRecord {
            name: name.into(),
            status,
            parameters,
            outcome,
        });
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.log.warnings.push(message.into());
    }

    pub fn summary(&mut self) -> &mut RunSummary {
        &mut self.log.summary
    }

    pub fn complete(mut self) -> ProvenanceLog {
        self.log.status = RunStatus::Completed;
        self.log.finished_at = now();
        self.log
    }

    pub fn abort(mut self, stage: &str, err: &PipelineError) -> ProvenanceLog {
        self.log.stages.push(StageRecord {
            name: stage.into(),
            status: StageStatus::Failed,
            parameters: Value::Null,
            outcome: Value::String(err.to_string()),
        });
        self.log.status = RunStatus::Aborted;
        self.log.error = Some(ErrorRecord {
            stage: stage.into(),
            kind: err.kind().into(),
            message: err.to_string(),
            exit_code: err.exit_code(),
        });
        self.log.finished_at = now();
        self.log
    }
}

fn is_hex64(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Structural validation of a log document; returns every violation found.
pub fn validate_log(v: &Value) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let mut need = |ok: bool, msg: &str| {
        if !ok {
            errs.push(msg.to_string());
        }
    };
    need(v.is_object(), "log must be an object");
    need(v["schema_version"].as_u64().is_some(), "schema_version must be an integer");
    need(v["tool"]["name"].is_string(), "tool.name must be a string");
    need(v["tool"]["version"].is_string(), "tool.version must be a string");
    need(v["tool"]["data_version"].is_string(), "tool.data_version must be a string");
    need(v["image_id"].is_string(), "image_id must be a string");
    for key in TIMESTAMP_KEYS {
        need(
            v[key].as_str().is_some_and(|s| chrono::DateTime::parse_from_rfc3339(s).is_ok()),
            &format!("{key} must be an RFC 3339 timestamp"),
        );
    }
    need(v["config"].is_object(), "config must be an object");
    let status = v["status"].as_str();
    need(
        matches!(status, Some("completed") | Some("aborted")),
        "status must be `completed` or `aborted`",
    );
    for list in ["inputs", "outputs"] {
        match v[list].as_array() {
            Some(items) => {
                for (i, f) in items.iter().enumerate() {
                    need(f["role"].is_string(), &format!("{list}[{i}].role must be a string"));
                    need(f["path"].is_string(), &format!("{list}[{i}].path must be a string"));
                    need(
                        f["sha256"].as_str().is_some_and(is_hex64),
                        &format!("{list}[{i}].sha256 must be 64 lowercase hex digits"),
                    );
                }
            }
            None => need(false, &format!("{list} must be an array")),
        }
    }
    match v["stages"].as_array() {
        Some(stages) => {
            for (i, s) in stages.iter().enumerate() {
                need(s["name"].is_string(), &format!("stages[{i}].name must be a string"));
                need(
                    matches!(s["status"].as_str(), Some("ok" | "warning" | "skipped" | "failed")),
                    &format!("stages[{i}].status is invalid"),
                );
            }
        }
        None => need(false, "stages must be an array"),
    }
    need(v["warnings"].is_array(), "warnings must be an array");
    need(v["summary"].is_object(), "summary must be an object");
    match status {
        Some("completed") => {
            need(v["error"].is_null(), "completed logs carry no error");
            need(
                v["outputs"].as_array().is_some_and(|o| !o.is_empty()),
                "completed logs list their outputs",
            );
            need(v["chart"].is_object(), "completed logs record the chart calibration used");
        }
        Some("aborted") => {
            need(
                v["error"]["exit_code"].as_i64().is_some_and(|c| (2..=5).contains(&c)),
                "aborted logs carry an error with exit code 2..5",
            );
            need(v["error"]["stage"].is_string(), "error.stage must be a string");
        }
        _ => {}
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// The log with timestamps removed, for run-to-run comparison.
pub fn without_timestamps(v: &Value) -> Value {
    let mut v = v.clone();
    if let Some(m) = v.as_object_mut() {
        for k in TIMESTAMP_KEYS {
            m.remove(k);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn aborted_log_is_valid() {
        let mut b = ProvenanceBuilder::new("img", json!({"firmware": "1.2"}));
        b.input("image", std::path::Path::new("/x.pfm"), "a".repeat(64));
        let log = b.abort("linearity", &PipelineError::Linearity("curved".into()));
        assert_eq!(log.camera_firmware.as_deref(), Some("1.2"));
        let v = serde_json::to_value(&log).unwrap();
        validate_log(&v).unwrap();
        assert_eq!(v["error"]["exit_code"], json!(3));
        assert_eq!(v["stages"][0]["status"], json!("failed"));
    }

    #[test]
    fn completed_log_needs_outputs_and_chart() {
        let log = ProvenanceBuilder::new("img", json!({})).complete();
        let errs = validate_log(&serde_json::to_value(&log).unwrap()).unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn rejects_bad_digest_and_status() {
        let mut v = serde_json::to_value(
            ProvenanceBuilder::new("img", json!({})).abort("ingest", &PipelineError::Io("x".into())),
        )
        .unwrap();
        v["inputs"] = json!([{"role": "image", "path": "a", "sha256": "XYZ"}]);
        v["status"] = json!("done");
        let errs = validate_log(&v).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("sha256")));
        assert!(errs.iter().any(|e| e.contains("status")));
    }

    #[test]
    fn strips_timestamps() {
        let v = serde_json::to_value(ProvenanceBuilder::new("i", json!({})).complete()).unwrap();
        let s = without_timestamps(&v);
        assert!(s.get("started_at").is_none() && s.get("finished_at").is_none());
        assert!(s.get("image_id").is_some());
    }
}
