//! Portable float map: `PF` (RGB) or `Pf` (gray), rows stored bottom-to-top.
//! Written little-endian (scale `-1.0`); both endiannesses are read.

use std::path::Path;

use super::{io_err, IoError};
use crate::image::{ImageState, LinearImage};

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// 1 or 3.
    pub channels: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok().filter(|s| !s.is_empty())
}

pub fn decode(bytes: &[u8], name: &str) -> Result<PfmImage, IoError> {
    let bad = |msg: &str| IoError::Header(name.to_string(), msg.to_string());
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos) {
        Some("PF") => 3,
        Some("Pf") => 1,
        _ => return Err(bad("missing PF/Pf magic")),
    };
    let width: usize = header_token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad width"))?;
    let height: usize = header_token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| bad("bad height"))?;
    let scale: f32 = header_token(bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("header not terminated"));
    }
    pos += 1;
    let little = scale < 0.0;
    let n = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < 4 * n {
        return Err(IoError::Truncated(name.to_string(), 4 * n, raster.len()));
    }
    let mut data = vec![0f32; n];
    let row_len = width * channels;
    for file_row in 0..height {
        let img_row = height - 1 - file_row;
        for i in 0..row_len {
            let off = 4 * (file_row * row_len + i);
            let b: [u8; 4] = raster[off..off + 4].try_into().expect("4 bytes");
            data[img_row * row_len + i] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode(img: &PfmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row_len = img.width * img.channels;
    out.reserve(4 * img.data.len());
    for row in (0..img.height).rev() {
        for v in &img.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

impl PfmImage {
    pub fn from_linear_image(img: &LinearImage) -> Self {
        PfmImage {
            width: img.width(),
            height: img.height(),
            channels: 3,
            data: img.pixels().iter().flatten().map(|&v| v as f32).collect(),
        }
    }

    /// A 3-channel map as a linear, camera-native image.
    pub fn into_linear_image(self, name: &str) -> Result<LinearImage, IoError> {
        if self.channels != 3 {
            return Err(IoError::Unsupported(
                name.to_string(),
                "expected a 3-channel PF image".into(),
            ));
        }
        if let Some(v) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(IoError::Parse(name.to_string(), format!("non-finite sample {v}")));
        }
        let pixels = self
            .data
            .chunks_exact(3)
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect();
        Ok(LinearImage::from_pixels(self.width, self.height, pixels, ImageState::CAMERA_LINEAR)
            .expect("size checked by decoder"))
    }
}

pub fn read(path: &Path) -> Result<PfmImage, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes, &path.display().to_string())
}

pub fn write(path: &Path, img: &PfmImage) -> Result<(), IoError> {
    super::write_atomic(path, &encode(img))
}

pub fn write_linear(path: &Path, img: &LinearImage) -> Result<(), IoError> {
    write(path, &PfmImage::from_linear_image(img))
}
