//! Human-readable summaries of provenance logs.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::provenance::{TOOL_NAME, SCHEMA_VERSION};
use super::PipelineError;

fn parse_version(v: &str) -> Option<(u64, u64, u64)> {
    let mut it = v.split(['.', '-', '+']).map(|p| p.parse::<u64>().ok());
    Some((it.next()??, it.next()??, it.next()??))
}

/// Whether a log was written by a newer tool or schema than this build.
pub fn is_newer(log: &Value) -> bool {
    let schema_newer = log["schema_version"]
        .as_u64()
        .is_some_and(|s| s > SCHEMA_VERSION as u64);
    let version_newer = match (
        log["tool"]["version"].as_str().and_then(parse_version),
        parse_version(crate::VERSION),
    ) {
        (Some(theirs), Some(ours)) => theirs > ours,
        _ => false,
    };
    schema_newer || version_newer
}

fn fmt_opt(v: &Value, digits: usize) -> String {
    v.as_f64()
        .map(|x| format!("{x:.digits$}"))
        .unwrap_or_else(|| "-".into())
}

/// One row per log; unreadable logs are an error, newer logs a warning.
pub fn render_report(paths: &[impl AsRef<Path>]) -> Result<String, PipelineError> {
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
        let log: Value = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Io(format!("{}: not a readable log: {e}", p.display())))?;
        if log["tool"]["name"].as_str().is_some_and(|n| n != TOOL_NAME) {
            warnings.push(format!("{}: written by `{}`", p.display(), log["tool"]["name"]));
        }
        if is_newer(&log) {
            warnings.push(format!(
                "{}: written by a newer version ({} {}, schema {}); rendering best-effort",
                p.display(),
                log["tool"]["name"].as_str().unwrap_or("?"),
                log["tool"]["version"].as_str().unwrap_or("?"),
                log["schema_version"]
            ));
        }
        let status = match log["status"].as_str() {
            Some("completed") => "ok".to_string(),
            Some("aborted") => format!(
                "ABORTED({}:{})",
                log["error"]["exit_code"],
                log["error"]["stage"].as_str().unwrap_or("?")
            ),
            other => format!("{}?", other.unwrap_or("unknown")),
        };
        let s = &log["summary"];
        rows.push([
            log["image_id"].as_str().unwrap_or("?").to_string(),
            status,
            s["linearity_verdict"].as_str().unwrap_or("-").to_string(),
            s["water_mode"].as_str().unwrap_or("-").to_string(),
            fmt_opt(&s["recoverable_fraction"], 4),
            fmt_opt(&s["calibration_residual"], 3),
            fmt_opt(&s["mean_patch_delta_e"], 3),
            log["warnings"].as_array().map_or(0, Vec::len).to_string(),
        ]);
    }
    let header = [
        "image", "status", "linearity", "water", "recoverable", "fit_dE", "patch_dE", "warnings",
    ];
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let _ = writeln!(out, "{}", line(&header.map(String::from)));
    for r in &rows {
        let _ = writeln!(out, "{}", line(r));
    }
    for w in warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::provenance::ProvenanceBuilder;
    use serde_json::json;

    fn write(dir: &Path, name: &str, v: &Value) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, serde_json::to_vec(v).unwrap()).unwrap();
        p
    }

    #[test]
    fn single_log_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ProvenanceBuilder::new("scene", json!({}));
        b.summary().linearity_verdict = Some("pass".into());
        b.summary().mean_patch_delta_e = Some(1.234);
        let p = write(dir.path(), "a.json", &serde_json::to_value(b.complete()).unwrap());
        let r = render_report(&[p]).unwrap();
        let lines: Vec<&str> = r.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("scene") && lines[1].contains(" ok ") && lines[1].contains("1.234"));
    }

    #[test]
    fn mixed_and_newer_logs() {
        let dir = tempfile::tempdir().unwrap();
        let ok = serde_json::to_value(ProvenanceBuilder::new("a", json!({})).complete()).unwrap();
        let bad = serde_json::to_value(
            ProvenanceBuilder::new("b", json!({}))
                .abort("linearity", &PipelineError::Linearity("x".into())),
        )
        .unwrap();
        let mut newer = ok.clone();
        newer["tool"]["version"] = json!("99.0.0");
        newer["image_id"] = json!("c");
        newer["unknown_future_field"] = json!(1);
        let paths = [
            write(dir.path(), "a.json", &ok),
            write(dir.path(), "b.json", &bad),
            write(dir.path(), "c.json", &newer),
        ];
        let r = render_report(&paths).unwrap();
        assert!(r.contains("ABORTED(3:linearity)"));
        assert!(r.lines().any(|l| l.starts_with("c ")));
        assert!(r.contains("newer version"));
    }

    #[test]
    fn unreadable_log_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        std::fs::write(&p, "{not json").unwrap();
        assert!(matches!(render_report(&[p]), Err(PipelineError::Io(_))));
        assert!(render_report(&[dir.path().join("missing.json")]).is_err());
    }

    #[test]
    fn version_comparison() {
        assert!(is_newer(&json!({"schema_version": 2, "tool": {"version": "0.0.1"}})));
        assert!(!is_newer(&json!({"schema_version": 1, "tool": {"version": "0.0.1"}})));
        assert_eq!(parse_version("1.2.3-beta"), Some((1, 2, 3)));
    }
}
