use serde::{Deserialize, Serialize};

use super::SpectrumError;

pub const MIN_WAVELENGTH_NM: f64 = 300.0;
pub const MAX_WAVELENGTH_NM: f64 = 830.0;

pub const GRID_START_NM: f64 = 380.0;
pub const GRID_END_NM: f64 = 690.0;
pub const GRID_STEP_NM: f64 = 5.0;

/// The internal integration grid, 380–690 nm inclusive at 5 nm (63 samples).
pub fn standard_grid() -> Vec<f64> {
    let n = ((GRID_END_NM - GRID_START_NM) / GRID_STEP_NM).round() as usize + 1;
    (0..n).map(|i| GRID_START_NM + GRID_STEP_NM * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Fraction of incident light reflected, in `[0, 1]`.
    Reflectance,
    /// Relative spectral power distribution of a light source.
    Illuminant,
    /// Relative response of one camera channel.
    Sensitivity,
    /// One color-matching function of a standard observer.
    Cmf,
}

impl SpectrumKind {
    fn accepts(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                SpectrumKind::Reflectance => (0.0..=1.0).contains(&v),
                _ => v >= 0.0,
            }
    }
}

/// A sampled function of wavelength.
///
/// Between samples the function is linear; outside `[first, last]` it is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelengths: Vec<f64>,
    values: Vec<f64>,
    kind: SpectrumKind,
}

impl Spectrum {
    pub fn new(
        wavelengths: Vec<f64>,
        values: Vec<f64>,
        kind: SpectrumKind,
    ) -> Result<Self, SpectrumError> {
        if wavelengths.len() < 2 {
            return Err(SpectrumError::TooShort {
                min: 2,
                got: wavelengths.len(),
            });
        }
        Self::with_min_len(wavelengths, values, kind)
    }

    fn with_min_len(
        wavelengths: Vec<f64>,
        values: Vec<f64>,
        kind: SpectrumKind,
    ) -> Result<Self, SpectrumError> {
        if wavelengths.len() != values.len() {
            return Err(SpectrumError::LengthMismatch(
                wavelengths.len(),
                values.len(),
            ));
        }
        check_grid(&wavelengths)?;
        for (&wavelength, &value) in wavelengths.iter().zip(&values) {
            if !kind.accepts(value) {
                return Err(SpectrumError::InvalidValue {
                    kind,
                    wavelength,
                    value,
                });
            }
        }
        Ok(Self {
            wavelengths,
            values,
            kind,
        })
    }

    /// A constant spectrum over the internal grid.
    pub fn constant(value: f64, kind: SpectrumKind) -> Result<Self, SpectrumError> {
        let grid = standard_grid();
        let values = vec![value; grid.len()];
        Self::new(grid, values, kind)
    }

    /// Samples `f` on `grid`.
    pub fn from_fn(
        grid: &[f64],
        kind: SpectrumKind,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, SpectrumError> {
        Self::new(grid.to_vec(), grid.iter().map(|&l| f(l)).collect(), kind)
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn expect_kind(&self, expected: SpectrumKind) -> Result<(), SpectrumError> {
        if self.kind != expected {
            return Err(SpectrumError::WrongKind {
                expected,
                got: self.kind,
            });
        }
        Ok(())
    }

    /// Piecewise-linear evaluation with zero outside the sampled support.
    pub fn value_at(&self, nm: f64) -> f64 {
        let wl = &self.wavelengths;
        let last = wl.len() - 1;
        if nm < wl[0] || nm > wl[last] {
            return 0.0;
        }
        // first index with wl[i] >= nm
        let hi = wl.partition_point(|&w| w < nm);
        if wl[hi] == nm {
            return self.values[hi];
        }
        let lo = hi - 1;
        let t = (nm - wl[lo]) / (wl[hi] - wl[lo]);
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }

    /// Resamples onto `grid`.
    ///
    /// A single-point grid is accepted here, so the result may hold fewer
    /// than the two samples [`Spectrum::new`] requires.
    pub fn resample(&self, grid: &[f64]) -> Result<Spectrum, SpectrumError> {
        if grid.is_empty() {
            return Err(SpectrumError::EmptyGrid);
        }
        let values = grid.iter().map(|&nm| self.value_at(nm)).collect();
        Self::with_min_len(grid.to_vec(), values, self.kind)
    }

    pub fn to_standard_grid(&self) -> Spectrum {
        self.resample(&standard_grid())
            .expect("standard grid is valid")
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.wavelengths == other.wavelengths
    }

    /// Multiplies every sample by `factor`, re-checking the value range.
    pub fn scaled(&self, factor: f64) -> Result<Spectrum, SpectrumError> {
        Self::with_min_len(
            self.wavelengths.clone(),
            self.values.iter().map(|v| v * factor).collect(),
            self.kind,
        )
    }

    /// Mean of the samples on the internal grid.
    pub fn grid_mean(&self) -> f64 {
        let s = self.to_standard_grid();
        s.values.iter().sum::<f64>() / s.values.len() as f64
    }

    /// `max - min` of the samples on the internal grid.
    pub fn grid_range(&self) -> f64 {
        let s = self.to_standard_grid();
        let (lo, hi) = s
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }
}

fn check_grid(grid: &[f64]) -> Result<(), SpectrumError> {
    for (i, &w) in grid.iter().enumerate() {
        if !w.is_finite() || !(MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&w) {
            return Err(SpectrumError::OutOfRange(w));
        }
        if i > 0 && w <= grid[i - 1] {
            return Err(SpectrumError::NotIncreasing(i));
        }
    }
    Ok(())
}

/// Trapezoidal integral of samples `f` over abscissae `x`.
pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xw, fw)| 0.5 * (xw[1] - xw[0]) * (fw[0] + fw[1]))
        .sum()
}

/// `∫ a(λ)·b(λ)·c(λ) dλ` by the trapezoidal rule. All three must share a grid.
pub fn integrate_product(a: &Spectrum, b: &Spectrum, c: &Spectrum) -> Result<f64, SpectrumError> {
    if !a.same_grid(b) || !a.same_grid(c) {
        return Err(SpectrumError::MismatchedGrids);
    }
    let product: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&c.values)
        .map(|((x, y), z)| x * y * z)
        .collect();
    Ok(trapezoid(&a.wavelengths, &product))
}
