use std::io::Write;
use std::path::{Path, PathBuf};

use super::{valid_id, ChartDocument, ChartError, ChartRecord};

/// A directory of `<chart_id>.json` records.
///
/// Single writer; every write goes through a temporary file in the same
/// directory followed by an atomic rename, so readers never see partial state.
#[derive(Debug, Clone)]
pub struct ChartRegistry {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ChartError + '_ {
    move |source| ChartError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ChartRegistry {
    /// Opens (creating if needed) the registry rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ChartError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, chart_id: &str) -> PathBuf {
        self.root.join(format!("{chart_id}.json"))
    }

    /// Stores `chart`. Replacing an existing record needs `overwrite`, and
    /// the replacement must keep the existing calibration history as a prefix.
    pub fn put(&self, chart: &ChartRecord, overwrite: bool) -> Result<(), ChartError> {
        chart.validate()?;
        let path = self.path_for(&chart.chart_id);
        if path.exists() {
            if !overwrite {
                return Err(ChartError::AlreadyExists(chart.chart_id.clone()));
            }
            let existing = self.get(&chart.chart_id)?;
            if !chart.calibrations.starts_with(&existing.calibrations) {
                return Err(ChartError::HistoryRewrite(chart.chart_id.clone()));
            }
        }
        let json = serde_json::to_string_pretty(&chart.to_document()).map_err(|source| {
            ChartError::Json {
                path: path.display().to_string(),
                source,
            }
        })?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(io_err(&self.root))?;
        tmp.write_all(json.as_bytes()).map_err(io_err(&path))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        tmp.persist(&path)
            .map_err(|e| ChartError::Io {
                path: path.display().to_string(),
                source: e.error,
            })?;
        Ok(())
    }

    pub fn get(&self, chart_id: &str) -> Result<ChartRecord, ChartError> {
        if !valid_id(chart_id) {
            return Err(ChartError::InvalidId(chart_id.to_string()));
        }
        let path = self.path_for(chart_id);
        if !path.exists() {
            return Err(ChartError::NotFound(chart_id.to_string()));
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let doc: ChartDocument = serde_json::from_str(&text).map_err(|source| ChartError::Json {
            path: path.display().to_string(),
            source,
        })?;
        ChartRecord::from_document(doc, &self.root)
    }

    /// Sorted chart ids.
    pub fn list(&self) -> Result<Vec<String>, ChartError> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let path = entry.map_err(io_err(&self.root))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if valid_id(stem) {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
