use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ChartError;

pub const MAX_MARGIN_FRAC: f64 = 0.45;

/// Axis-aligned patch rectangle; `x1`/`y1` are exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub name: String,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PatchRect {
    fn overlaps(&self, other: &PatchRect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn area(&self) -> usize {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }

    pub fn translated(&self, dx: usize, dy: usize) -> PatchRect {
        PatchRect {
            name: self.name.clone(),
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }
}

/// User-specified patch regions for one chart in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub width: usize,
    pub height: usize,
    pub margin_frac: f64,
    pub patches: Vec<PatchRect>,
}

impl PatchLayout {
    /// Lays `names` out row-major in a grid of `cols` columns of square
    /// `patch`-pixel cells separated (and bordered) by `gap` pixels.
    pub fn grid(names: &[String], cols: usize, patch: usize, gap: usize, margin_frac: f64) -> Self {
        let rows = names.len().div_ceil(cols);
        let patches = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let (c, r) = (i % cols, i / cols);
                let x0 = gap + c * (patch + gap);
                let y0 = gap + r * (patch + gap);
                PatchRect {
                    name: name.clone(),
                    x0,
                    y0,
                    x1: x0 + patch,
                    y1: y0 + patch,
                }
            })
            .collect();
        PatchLayout {
            width: gap + cols * (patch + gap),
            height: gap + rows * (patch + gap),
            margin_frac,
            patches,
        }
    }

    /// Moves every rectangle by `(dx, dy)` into a `width`×`height` image.
    pub fn placed(&self, dx: usize, dy: usize, width: usize, height: usize) -> Self {
        PatchLayout {
            width,
            height,
            margin_frac: self.margin_frac,
            patches: self.patches.iter().map(|r| r.translated(dx, dy)).collect(),
        }
    }

    pub fn rect(&self, name: &str) -> Option<&PatchRect> {
        self.patches.iter().find(|r| r.name == name)
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        if !(0.0..=MAX_MARGIN_FRAC).contains(&self.margin_frac) {
            return Err(ChartError::Layout(format!(
                "margin_frac {} outside [0, {MAX_MARGIN_FRAC}]",
                self.margin_frac
            )));
        }
        let mut seen = HashSet::new();
        for r in &self.patches {
            if !seen.insert(r.name.as_str()) {
                return Err(ChartError::Layout(format!("duplicate patch `{}`", r.name)));
            }
            if r.x0 >= r.x1 || r.y0 >= r.y1 {
                return Err(ChartError::Layout(format!("patch `{}` has no area", r.name)));
            }
            if r.x1 > self.width || r.y1 > self.height {
                return Err(ChartError::OutOfBounds {
                    name: r.name.clone(),
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }

    pub fn check_disjoint(&self) -> Result<(), ChartError> {
        for (i, a) in self.patches.iter().enumerate() {
            if let Some(b) = self.patches[i + 1..].iter().find(|b| a.overlaps(b)) {
                return Err(ChartError::Layout(format!(
                    "patches `{}` and `{}` overlap",
                    a.name, b.name
                )));
            }
        }
        Ok(())
    }

    /// The rectangle after shrinking each side by `margin_frac` of its
    /// extent (rounded up), or `None` when nothing is left.
    pub fn inner_rect(&self, rect: &PatchRect) -> Option<(usize, usize, usize, usize)> {
        let shrink = |extent: usize| (self.margin_frac * extent as f64 - 1e-9).ceil().max(0.0) as usize;
        let (w, h) = (rect.x1 - rect.x0, rect.y1 - rect.y0);
        let (sx, sy) = (shrink(w), shrink(h));
        if 2 * sx >= w || 2 * sy >= h {
            return None;
        }
        Some((rect.x0 + sx, rect.y0 + sy, rect.x1 - sx, rect.y1 - sy))
    }

    pub fn load(path: &Path) -> Result<Self, ChartError> {
        let text = std::fs::read_to_string(path).map_err(|source| ChartError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let layout: PatchLayout =
            serde_json::from_str(&text).map_err(|source| ChartError::Json {
                path: path.display().to_string(),
                source,
            })?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }
}
