//! File formats: spectra CSV, camera JSON, PFM, 16-bit PPM, display PNG,
//! sparse depth CSV and content digests.

pub mod depth;
pub mod pfm;
pub mod png;
pub mod ppm;
pub mod spectra;

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image::LinearImage;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: malformed header: {1}")]
    Header(String, String),
    #[error("{0}: truncated data (expected {1} bytes, found {2})")]
    Truncated(String, usize, usize),
    #[error(
        "{0}: 8-bit image rejected. 8-bit files come from in-camera processed paths whose pixel \
         intensities are not linearly related to scene radiance; supply a 16-bit linear PPM or PFM \
         exported from the RAW file"
    )]
    EightBit(String),
    #[error("{0}: unsupported format: {1}")]
    Unsupported(String, String),
    #[error("{0}: {1}")]
    Parse(String, String),
    #[error("{0}: {1}")]
    Spectrum(String, crate::spectral::SpectrumError),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}: png encoding: {1}")]
    Png(String, String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

/// Reads a linear image from a 16-bit PPM or a PFM, chosen by content.
pub fn read_linear_image(path: &Path) -> Result<LinearImage, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let name = path.display().to_string();
    match bytes.get(..2) {
        Some(b"PF") | Some(b"Pf") => pfm::decode(&bytes, &name)?.into_linear_image(&name),
        Some(b"P6") => ppm::decode16(&bytes, &name),
        Some(b"P3") | Some(b"P5") | Some(b"P2") => Err(IoError::Unsupported(
            name,
            "only binary RGB PPM (P6) is accepted".into(),
        )),
        _ => Err(IoError::Unsupported(
            name,
            "expected a PFM or 16-bit binary PPM".into(),
        )),
    }
}

/// Writes `bytes` through a temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
