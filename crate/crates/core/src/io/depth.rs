//! Depth maps: single-channel PFM in meters, or sparse `x,y,z` CSV.
//! Non-positive distances mark invalid pixels.

use std::path::Path;

use super::{io_err, pfm, IoError};
use crate::water::DepthMap;

pub fn from_pfm(img: pfm::PfmImage, name: &str) -> Result<DepthMap, IoError> {
    if img.channels != 1 {
        return Err(IoError::Unsupported(
            name.to_string(),
            "depth maps must be single-channel (Pf)".into(),
        ));
    }
    let z = img.data.iter().map(|&v| v as f64).collect();
    Ok(DepthMap::new(img.width, img.height, z).expect("size checked by decoder"))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap, IoError> {
    from_pfm(pfm::read(path)?, &path.display().to_string())
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    pfm::write(
        path,
        &pfm::PfmImage {
            width: depth.width(),
            height: depth.height(),
            channels: 1,
            data: depth.values().iter().map(|&z| z as f32).collect(),
        },
    )
}

/// Parses `x,y,z` rows (header required); unlisted pixels are invalid.
pub fn parse_csv(text: &str, width: usize, height: usize, name: &str) -> Result<DepthMap, IoError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "x,y,z" => {}
        other => {
            return Err(IoError::Header(
                name.to_string(),
                format!("expected `x,y,z`, found {other:?}"),
            ))
        }
    }
    let mut z = vec![0.0; width * height];
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(IoError::Parse(name.to_string(), format!("row {row}: expected 3 fields")));
        }
        let perr = |e: String| IoError::Parse(name.to_string(), format!("row {row}: {e}"));
        let x: usize = f[0].parse().map_err(|e| perr(format!("{e}")))?;
        let y: usize = f[1].parse().map_err(|e| perr(format!("{e}")))?;
        let d: f64 = f[2].parse().map_err(|e| perr(format!("{e}")))?;
        if x >= width || y >= height {
            return Err(perr(format!("({x}, {y}) outside {width}x{height}")));
        }
        z[y * width + x] = d;
    }
    Ok(DepthMap::new(width, height, z).expect("sized"))
}

pub fn read_csv(path: &Path, width: usize, height: usize) -> Result<DepthMap, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text, width, height, &path.display().to_string())
}

/// Reads a depth map by extension (`.csv` needs the image size).
pub fn read(path: &Path, width: usize, height: usize) -> Result<DepthMap, IoError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(path, width, height)
    } else {
        read_pfm(path)
    }
}
