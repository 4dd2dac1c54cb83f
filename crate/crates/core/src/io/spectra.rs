//! Spectra as `wavelength_nm,value` CSV, inline JSON arrays, and camera documents.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, IoError};
use crate::spectral::{CameraModel, Spectrum, SpectrumError, SpectrumKind};

pub const CSV_HEADER: &str = "wavelength_nm,value";

/// Inline JSON form of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumData {
    pub wavelength_nm: Vec<f64>,
    pub value: Vec<f64>,
}

impl From<&Spectrum> for SpectrumData {
    fn from(s: &Spectrum) -> Self {
        Self {
            wavelength_nm: s.wavelengths().to_vec(),
            value: s.values().to_vec(),
        }
    }
}

impl SpectrumData {
    pub fn into_spectrum(self, kind: SpectrumKind) -> Result<Spectrum, SpectrumError> {
        Spectrum::new(self.wavelength_nm, self.value, kind)
    }
}

/// A spectrum given inline or as a CSV path relative to the referencing document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSource {
    Inline(SpectrumData),
    File(String),
}

impl SpectrumSource {
    pub fn resolve(&self, base_dir: &Path, kind: SpectrumKind) -> Result<Spectrum, SpectrumError> {
        match self {
            SpectrumSource::Inline(data) => data.clone().into_spectrum(kind),
            SpectrumSource::File(rel) => {
                let path = base_dir.join(rel);
                read_csv(&path, kind).map_err(|e| match e {
                    IoError::Spectrum(_, inner) => inner,
                    other => SpectrumError::Render(other.to_string()),
                })
            }
        }
    }
}

pub fn parse_csv(text: &str, kind: SpectrumKind, name: &str) -> Result<Spectrum, IoError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim().trim_start_matches('\u{feff}') == CSV_HEADER => {}
        other => {
            return Err(IoError::Header(
                name.to_string(),
                format!("expected `{CSV_HEADER}`, found {other:?}"),
            ))
        }
    }
    let mut wl = Vec::new();
    let mut vals = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let mut fields = line.split(',').map(str::trim);
        let parse = |f: Option<&str>| -> Result<f64, IoError> {
            let f = f.ok_or_else(|| IoError::Parse(name.to_string(), format!("row {row}: missing field")))?;
            f.parse::<f64>()
                .map_err(|e| IoError::Parse(name.to_string(), format!("row {row}: `{f}`: {e}")))
        };
        wl.push(parse(fields.next())?);
        vals.push(parse(fields.next())?);
        if fields.next().is_some() {
            return Err(IoError::Parse(name.to_string(), format!("row {row}: too many fields")));
        }
    }
    Spectrum::new(wl, vals, kind).map_err(|e| IoError::Spectrum(name.to_string(), e))
}

pub fn read_csv(path: &Path, kind: SpectrumKind) -> Result<Spectrum, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text, kind, &path.display().to_string())
}

/// CSV text; values use the shortest representation that parses back exactly.
pub fn to_csv(s: &Spectrum) -> String {
    let mut out = String::with_capacity(24 * s.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (w, v) in s.wavelengths().iter().zip(s.values()) {
        let _ = writeln!(out, "{w:?},{v:?}");
    }
    out
}

pub fn write_csv(path: &Path, s: &Spectrum) -> Result<(), IoError> {
    super::write_atomic(path, to_csv(s).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraChannels {
    pub r: SpectrumSource,
    pub g: SpectrumSource,
    pub b: SpectrumSource,
}

/// `{name, channels: {r, g, b}}`, each channel a CSV path or inline arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDocument {
    pub name: String,
    pub channels: CameraChannels,
}

impl CameraDocument {
    pub fn from_camera(cam: &CameraModel) -> Self {
        let [r, g, b] = cam.channels().clone().map(|s| SpectrumSource::Inline(SpectrumData::from(&s)));
        Self {
            name: cam.name.clone(),
            channels: CameraChannels { r, g, b },
        }
    }

    pub fn into_camera(self, base_dir: &Path) -> Result<CameraModel, SpectrumError> {
        let k = SpectrumKind::Sensitivity;
        let r = self.channels.r.resolve(base_dir, k)?;
        let g = self.channels.g.resolve(base_dir, k)?;
        let b = self.channels.b.resolve(base_dir, k)?;
        CameraModel::new(self.name, [r, g, b])
    }
}

pub fn parse_camera(text: &str, base_dir: &Path, name: &str) -> Result<CameraModel, IoError> {
    let doc: CameraDocument = serde_json::from_str(text).map_err(|source| IoError::Json {
        path: name.to_string(),
        source,
    })?;
    doc.into_camera(base_dir)
        .map_err(|e| IoError::Spectrum(name.to_string(), e))
}

pub fn read_camera(path: &Path) -> Result<CameraModel, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_camera(
        &text,
        path.parent().unwrap_or(Path::new(".")),
        &path.display().to_string(),
    )
}

pub fn write_camera(path: &Path, cam: &CameraModel) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(&CameraDocument::from_camera(cam)).expect("serializes");
    super::write_atomic(path, json.as_bytes())
}
