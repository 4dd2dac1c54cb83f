//! Display-only PNG export. Files carry a text chunk marking them as
//! non-scientific renderings.

use std::path::Path;

use super::{io_err, IoError};
use crate::image::LinearImage;

pub const DISPLAY_WATERMARK: &str =
    "NON-SCIENTIFIC display rendering (sRGB-encoded, clipped); use the PFM outputs for measurement";

/// Writes 8-bit sRGB-encoded values of an already display-encoded image.
pub fn write_display(path: &Path, encoded: &LinearImage) -> Result<(), IoError> {
    let name = path.display().to_string();
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, encoded.width() as u32, encoded.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("Comment".into(), DISPLAY_WATERMARK.into())
            .map_err(|e| IoError::Png(name.clone(), e.to_string()))?;
        enc.add_text_chunk("Software".into(), format!("uwcolor {}", crate::VERSION))
            .map_err(|e| IoError::Png(name.clone(), e.to_string()))?;
        let mut writer = enc
            .write_header()
            .map_err(|e| IoError::Png(name.clone(), e.to_string()))?;
        let data: Vec<u8> = encoded
            .pixels()
            .iter()
            .flatten()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
            .collect();
        writer
            .write_image_data(&data)
            .map_err(|e| IoError::Png(name.clone(), e.to_string()))?;
    }
    std::fs::write(path, buf).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageState;

    #[test]
    fn watermark_is_embedded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let img = LinearImage::filled(2, 2, [0.5; 3], ImageState::CAMERA_LINEAR);
        write_display(&path, &img).unwrap();
        let decoder = png::Decoder::new(std::fs::File::open(&path).unwrap());
        let reader = decoder.read_info().unwrap();
        let texts = &reader.info().uncompressed_latin1_text;
        assert!(texts.iter().any(|t| t.text.contains("NON-SCIENTIFIC")));
    }
}
