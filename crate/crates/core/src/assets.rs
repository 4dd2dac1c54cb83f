//! Bundled reference data.
//!
//! - CIE 1931 2° standard observer, 380–780 nm at 5 nm
//! - CIE standard illuminant D65, 300–780 nm at 5 nm
//! - Nikon D5100 spectral sensitivities (NPL measurement), 380–780 nm
//! - A 24-patch reference chart: published average reflectances for the 18
//!   chromatic patches and spectrally flat neutrals at their nominal levels

use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::chart::{CalibrationEntry, ChartRecord, PatchDocument, ReflectanceSource};
use crate::io::spectra::{parse_camera, parse_csv};
use crate::spectral::{CameraModel, Spectrum, SpectrumKind};

pub const CMF_X_CSV: &str = include_str!("../data/cie1931_2deg_xbar.csv");
pub const CMF_Y_CSV: &str = include_str!("../data/cie1931_2deg_ybar.csv");
pub const CMF_Z_CSV: &str = include_str!("../data/cie1931_2deg_zbar.csv");
pub const D65_CSV: &str = include_str!("../data/cie_d65.csv");
pub const NIKON_D5100_JSON: &str = include_str!("../data/camera_nikon_d5100.json");
pub const REFERENCE_CHART_JSON: &str = include_str!("../data/reference_chart_24.json");

/// Version tag of the bundled data set, recorded in provenance.
pub const DATA_VERSION: &str = "uwcolor-data-1";

pub fn d65() -> Spectrum {
    parse_csv(D65_CSV, SpectrumKind::Illuminant, "builtin:D65").expect("bundled D65 is valid")
}

pub fn nikon_d5100() -> CameraModel {
    parse_camera(NIKON_D5100_JSON, Path::new("."), "builtin:nikon_d5100")
        .expect("bundled camera is valid")
}

/// A synthetic camera with Gaussian channels peaking at 600, 540 and 455 nm.
pub fn synthetic_camera() -> CameraModel {
    CameraModel::gaussian(
        "synthetic_gaussian",
        [(600.0, 35.0), (540.0, 40.0), (455.0, 30.0)],
    )
    .expect("valid gaussian camera")
}

pub fn builtin_camera(name: &str) -> Option<CameraModel> {
    match name {
        "nikon_d5100" => Some(nikon_d5100()),
        "synthetic_gaussian" => Some(synthetic_camera()),
        _ => None,
    }
}

pub fn builtin_illuminant(name: &str) -> Option<Spectrum> {
    match name.to_ascii_uppercase().as_str() {
        "D65" => Some(d65()),
        "E" => Some(Spectrum::constant(1.0, SpectrumKind::Illuminant).expect("valid")),
        _ => None,
    }
}

#[derive(Deserialize)]
struct PatchList {
    patches: Vec<PatchDocument>,
}

/// The bundled 24-patch chart under `chart_id`, with one calibration entry.
pub fn reference_chart(chart_id: &str) -> ChartRecord {
    let list: PatchList = serde_json::from_str(REFERENCE_CHART_JSON).expect("bundled chart json");
    let mut doc = ChartRecord {
        chart_id: chart_id.to_string(),
        patches: vec![],
        calibrations: vec![],
        reflectance_source: ReflectanceSource::Nominal,
    }
    .to_document();
    doc.patches = list.patches;
    doc.calibrations = vec![CalibrationEntry {
        date: NaiveDate::from_ymd_opt(2026, 1, 15).expect("valid date"),
        operator: "bundled".into(),
        instrument: "published average spectra; idealized flat neutrals".into(),
        spectra_file: "builtin:reference_chart_24".into(),
    }];
    ChartRecord::from_document(doc, Path::new(".")).expect("bundled chart is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data_loads() {
        assert_eq!(d65().len(), 97);
        assert_eq!(nikon_d5100().name, "nikon_d5100");
        assert_eq!(reference_chart("X").patches.len(), 24);
        assert!(builtin_illuminant("d65").is_some());
        assert!(builtin_camera("nope").is_none());
    }
}
