//! Binary PPM (`P6`). Only 16-bit samples (maxval > 255) are accepted as
//! linear input; they are big-endian and scaled by `1 / maxval`.

use std::path::Path;

use super::{io_err, IoError};
use crate::image::{ImageState, LinearImage};

fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn number(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    skip_ws_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

pub fn decode16(bytes: &[u8], name: &str) -> Result<LinearImage, IoError> {
    let bad = |msg: &str| IoError::Header(name.to_string(), msg.to_string());
    if bytes.get(..2) != Some(b"P6") {
        return Err(bad("missing P6 magic"));
    }
    let mut pos = 2;
    let width = number(bytes, &mut pos).ok_or_else(|| bad("bad width"))?;
    let height = number(bytes, &mut pos).ok_or_else(|| bad("bad height"))?;
    let maxval = number(bytes, &mut pos).ok_or_else(|| bad("bad maxval"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    if maxval < 256 {
        return Err(IoError::EightBit(name.to_string()));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("header not terminated"));
    }
    pos += 1;
    let n = width * height * 3;
    let raster = &bytes[pos..];
    if raster.len() < 2 * n {
        return Err(IoError::Truncated(name.to_string(), 2 * n, raster.len()));
    }
    let scale = maxval as f64;
    let pixels = raster[..2 * n]
        .chunks_exact(6)
        .map(|p| {
            let s = |i: usize| (u16::from_be_bytes([p[2 * i], p[2 * i + 1]]) as f64 / scale).min(1.0);
            [s(0), s(1), s(2)]
        })
        .collect();
    Ok(LinearImage::from_pixels(width, height, pixels, ImageState::CAMERA_LINEAR)
        .expect("size checked"))
}

/// Encodes with maxval 65535, round-half-up quantization, values clamped to `[0, 1]`.
pub fn encode16(img: &LinearImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(6 * img.len());
    for px in img.pixels() {
        for v in px {
            let q = (v.clamp(0.0, 1.0) * 65535.0 + 0.5).floor() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

pub fn read16(path: &Path) -> Result<LinearImage, IoError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode16(&bytes, &path.display().to_string())
}

pub fn write16(path: &Path, img: &LinearImage) -> Result<(), IoError> {
    super::write_atomic(path, &encode16(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_by_maxval() {
        let mut bytes = b"P6\n# linear export\n1 1\n65535\n".to_vec();
        for v in [32768u16, 0, 65535] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = decode16(&bytes, "t").unwrap();
        assert_eq!(img.get(0, 0), [32768.0 / 65535.0, 0.0, 1.0]);
        assert!((img.get(0, 0)[0] - 0.50000763).abs() < 1e-8);
    }

    #[test]
    fn rejects_eight_bit() {
        let bytes = b"P6\n1 1\n255\n\x10\x20\x30".to_vec();
        let err = decode16(&bytes, "photo.ppm").unwrap_err();
        assert!(matches!(err, IoError::EightBit(_)));
        assert!(err.to_string().contains("not linearly related to scene radiance"));
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(decode16(b"P6\nx 1\n65535\n", "t"), Err(IoError::Header(..))));
        assert!(matches!(
            decode16(b"P6\n2 2\n65535\n\0\0", "t"),
            Err(IoError::Truncated(..))
        ));
    }

    #[test]
    fn encode_decode() {
        let img = LinearImage::filled(2, 1, [0.25, 0.5, 1.0], ImageState::CAMERA_LINEAR);
        let back = decode16(&encode16(&img), "t").unwrap();
        for (a, b) in img.pixels().iter().flatten().zip(back.pixels().iter().flatten()) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
    }
}
