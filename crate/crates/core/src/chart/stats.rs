use serde::{Deserialize, Serialize};

use super::{ChartError, PatchLayout};
use crate::image::LinearImage;

/// Fraction trimmed from each tail before averaging.
pub const TRIM_FRACTION: f64 = 0.10;
/// A pixel with any channel at or above this level counts as clipped.
pub const CLIP_LEVEL: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchStat {
    pub name: String,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub pixel_count: usize,
    pub clipped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatchStats {
    pub patches: Vec<PatchStat>,
}

impl PatchStats {
    pub fn get(&self, name: &str) -> Option<&PatchStat> {
        self.patches.iter().find(|p| p.name == name)
    }
}

/// Trimmed mean and standard deviation of `values` (sorted in place).
///
/// `floor(trim · n)` samples are dropped from each end; the standard
/// deviation is the population value of what remains.
pub fn trimmed_mean_std(values: &mut [f64], trim: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let cut = (trim * n as f64).floor() as usize;
    let kept = &values[cut..n - cut];
    let m = kept.len() as f64;
    // Shifted by the first kept sample so constant regions are exact.
    let shift = kept[0];
    let mean = shift + kept.iter().map(|v| v - shift).sum::<f64>() / m;
    let var = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    (mean, var.sqrt())
}

/// Per-patch trimmed statistics inside the margin-shrunk layout rectangles.
pub fn extract_patch_stats(img: &LinearImage, layout: &PatchLayout) -> Result<PatchStats, ChartError> {
    layout.validate()?;
    if img.width() != layout.width || img.height() != layout.height {
        return Err(ChartError::DimensionMismatch(
            layout.width,
            layout.height,
            img.width(),
            img.height(),
        ));
    }
    let mut patches = Vec::with_capacity(layout.patches.len());
    for rect in &layout.patches {
        let (x0, y0, x1, y1) = layout
            .inner_rect(rect)
            .ok_or_else(|| ChartError::EmptyRegion(rect.name.clone()))?;
        let n = (x1 - x0) * (y1 - y0);
        let mut channels = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        let mut clipped = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let px = img.get(x, y);
                if px.iter().any(|&v| v >= CLIP_LEVEL) {
                    clipped += 1;
                }
                for (ch, v) in channels.iter_mut().zip(px) {
                    ch.push(v);
                }
            }
        }
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for c in 0..3 {
            (mean[c], std[c]) = trimmed_mean_std(&mut channels[c], TRIM_FRACTION);
        }
        patches.push(PatchStat {
            name: rect.name.clone(),
            mean,
            std,
            pixel_count: n,
            clipped_fraction: clipped as f64 / n as f64,
        });
    }
    Ok(PatchStats { patches })
}
