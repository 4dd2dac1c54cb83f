//! Calibrated color charts: patch reflectances, calibration history,
//! on-disk registry, patch layouts and per-patch statistics.

mod layout;
mod registry;
mod stats;

pub use layout::{PatchLayout, PatchRect, MAX_MARGIN_FRAC};
pub use registry::ChartRegistry;
pub use stats::{
    extract_patch_stats, trimmed_mean_std, PatchStat, PatchStats, CLIP_LEVEL, TRIM_FRACTION,
};

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::spectra::{SpectrumData, SpectrumSource};
use crate::spectral::{Spectrum, SpectrumError, SpectrumKind};

/// Maximum `max - min` reflectance over the internal grid for an achromatic patch.
pub const FLATNESS_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart id must be nonempty and use only [A-Za-z0-9._-]: {0:?}")]
    InvalidId(String),
    #[error("chart has no patches")]
    NoPatches,
    #[error("duplicate patch name `{0}`")]
    DuplicatePatch(String),
    #[error("achromatic patch `{name}` is not flat: reflectance range {range:.4} > {FLATNESS_TOLERANCE}")]
    NotFlat { name: String, range: f64 },
    #[error("patch `{0}`: {1}")]
    Spectrum(String, SpectrumError),
    #[error("chart `{0}` not found in registry")]
    NotFound(String),
    #[error("chart `{0}` already exists; pass overwrite to replace it")]
    AlreadyExists(String),
    #[error("chart `{0}`: calibration history is append-only and the new record drops or edits entries")]
    HistoryRewrite(String),
    #[error("chart `{0}` has no calibration entries")]
    Uncalibrated(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("patch `{0}` is empty after applying the margin")]
    EmptyRegion(String),
    #[error("patch `{name}` rectangle exceeds the {width}x{height} image")]
    OutOfBounds {
        name: String,
        width: usize,
        height: usize,
    },
    #[error("layout is for {0}x{1} but image is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchRole {
    Chromatic,
    Achromatic,
}

/// Where the patch reflectances came from. Measured values take precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReflectanceSource {
    Nominal,
    Manufacturer,
    #[default]
    Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub name: String,
    pub reflectance: Spectrum,
    pub role: PatchRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub date: NaiveDate,
    pub operator: String,
    pub instrument: String,
    pub spectra_file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartRecord {
    pub chart_id: String,
    pub patches: Vec<PatchRecord>,
    pub calibrations: Vec<CalibrationEntry>,
    pub reflectance_source: ReflectanceSource,
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl ChartRecord {
    pub fn validate(&self) -> Result<(), ChartError> {
        if !valid_id(&self.chart_id) {
            return Err(ChartError::InvalidId(self.chart_id.clone()));
        }
        if self.patches.is_empty() {
            return Err(ChartError::NoPatches);
        }
        let mut seen = HashSet::new();
        for p in &self.patches {
            if !seen.insert(p.name.as_str()) {
                return Err(ChartError::DuplicatePatch(p.name.clone()));
            }
            p.reflectance
                .expect_kind(SpectrumKind::Reflectance)
                .map_err(|e| ChartError::Spectrum(p.name.clone(), e))?;
            if p.role == PatchRole::Achromatic {
                let range = p.reflectance.grid_range();
                if range > FLATNESS_TOLERANCE {
                    return Err(ChartError::NotFlat {
                        name: p.name.clone(),
                        range,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn patch(&self, name: &str) -> Option<&PatchRecord> {
        self.patches.iter().find(|p| p.name == name)
    }

    pub fn patch_names(&self) -> Vec<String> {
        self.patches.iter().map(|p| p.name.clone()).collect()
    }

    pub fn achromatic(&self) -> impl Iterator<Item = &PatchRecord> {
        self.patches
            .iter()
            .filter(|p| p.role == PatchRole::Achromatic)
    }

    /// The brightest achromatic patch.
    pub fn white_patch(&self) -> Option<&PatchRecord> {
        self.achromatic().max_by(|a, b| {
            a.reflectance
                .grid_mean()
                .total_cmp(&b.reflectance.grid_mean())
        })
    }

    pub fn latest_calibration(&self) -> Option<&CalibrationEntry> {
        self.calibrations.iter().max_by_key(|c| c.date)
    }

    pub fn require_calibrated(&self) -> Result<&CalibrationEntry, ChartError> {
        self.latest_calibration()
            .ok_or_else(|| ChartError::Uncalibrated(self.chart_id.clone()))
    }

    /// Days between the latest calibration and `today`.
    pub fn calibration_age_days(&self, today: NaiveDate) -> Option<i64> {
        self.latest_calibration()
            .map(|c| (today - c.date).num_days())
    }

    pub fn to_document(&self) -> ChartDocument {
        ChartDocument {
            chart_id: self.chart_id.clone(),
            reflectance_source: self.reflectance_source,
            patches: self
                .patches
                .iter()
                .map(|p| PatchDocument {
                    name: p.name.clone(),
                    role: p.role,
                    reflectance: SpectrumSource::Inline(SpectrumData::from(&p.reflectance)),
                })
                .collect(),
            calibrations: self.calibrations.clone(),
        }
    }

    /// Builds a record from its JSON document; relative spectrum paths are
    /// resolved against `base_dir`.
    pub fn from_document(doc: ChartDocument, base_dir: &Path) -> Result<Self, ChartError> {
        let patches = doc
            .patches
            .into_iter()
            .map(|p| {
                let reflectance = p
                    .reflectance
                    .resolve(base_dir, SpectrumKind::Reflectance)
                    .map_err(|e| ChartError::Spectrum(p.name.clone(), e))?;
                Ok(PatchRecord {
                    name: p.name,
                    reflectance,
                    role: p.role,
                })
            })
            .collect::<Result<Vec<_>, ChartError>>()?;
        let chart = ChartRecord {
            chart_id: doc.chart_id,
            patches,
            calibrations: doc.calibrations,
            reflectance_source: doc.reflectance_source,
        };
        chart.validate()?;
        Ok(chart)
    }

    pub fn load(path: &Path) -> Result<Self, ChartError> {
        let text = std::fs::read_to_string(path).map_err(|source| ChartError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let doc: ChartDocument = serde_json::from_str(&text).map_err(|source| ChartError::Json {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_document(doc, path.parent().unwrap_or(Path::new(".")))
    }
}

/// On-disk form of a chart record (`registry/<chart_id>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDocument {
    pub chart_id: String,
    #[serde(default)]
    pub reflectance_source: ReflectanceSource,
    pub patches: Vec<PatchDocument>,
    #[serde(default)]
    pub calibrations: Vec<CalibrationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDocument {
    pub name: String,
    pub role: PatchRole,
    pub reflectance: SpectrumSource,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    #[test]
    fn reference_chart_is_valid() {
        let chart = assets::reference_chart("REF");
        chart.validate().unwrap();
        assert_eq!(chart.patches.len(), 24);
        assert_eq!(chart.achromatic().count(), 6);
        assert_eq!(chart.white_patch().unwrap().name, "white");
    }

    #[test]
    fn non_flat_white_is_rejected() {
        let mut chart = assets::reference_chart("REF");
        let white = chart.patches.iter_mut().find(|p| p.name == "white").unwrap();
        white.reflectance =
            Spectrum::new(vec![380.0, 690.0], vec![0.7, 0.9], SpectrumKind::Reflectance).unwrap();
        match chart.validate() {
            Err(ChartError::NotFlat { name, range }) => {
                assert_eq!(name, "white");
                assert!((range - 0.2).abs() < 1e-9);
            }
            other => panic!("expected NotFlat, got {other:?}"),
        }
    }

    #[test]
    fn ids_and_names_are_checked() {
        let mut chart = assets::reference_chart("REF");
        chart.chart_id = "../etc".into();
        assert!(matches!(chart.validate(), Err(ChartError::InvalidId(_))));
        let mut chart = assets::reference_chart("REF");
        chart.patches[1].name = chart.patches[0].name.clone();
        assert!(matches!(chart.validate(), Err(ChartError::DuplicatePatch(_))));
    }

    #[test]
    fn calibration_age() {
        let chart = assets::reference_chart("REF");
        let date = chart.latest_calibration().unwrap().date;
        assert_eq!(
            chart.calibration_age_days(date + chrono::Days::new(30)),
            Some(30)
        );
    }
}
