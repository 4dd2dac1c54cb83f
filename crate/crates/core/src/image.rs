//! The in-memory image type shared by every stage.

use thiserror::Error;

/// Whether pixel values are still proportional to scene radiance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Linear,
    /// Output of a photofinishing stage. Physics operations refuse these by default.
    Processed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    CameraNative,
    CieXyz,
    LinearSrgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ImageState {
    pub encoding: Encoding,
    pub space: ColorSpace,
}

impl ImageState {
    pub const CAMERA_LINEAR: ImageState = ImageState {
        encoding: Encoding::Linear,
        space: ColorSpace::CameraNative,
    };
}

/// How an operation that requires linear input treats `processed` images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputPolicy {
    #[default]
    RejectProcessed,
    /// Explicit user override; the result is meaningless as a measurement.
    AllowProcessed,
}

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("image is tagged `processed`; physics operations require linear input (override required)")]
    ProcessedInput,
    #[error("pixel buffer has {got} entries, expected {expected} for {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("image dimensions {0}x{1} do not match {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// A width × height × 3 floating-point image in relative linear exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    pub state: ImageState,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, state: ImageState) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
            state,
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3], state: ImageState) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            state,
        }
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
        state: ImageState,
    ) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            state,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [f64; 3]) {
        let i = self.index(x, y);
        self.pixels[i] = value;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<[f64; 3]> {
        self.pixels
    }

    pub fn is_processed(&self) -> bool {
        self.state.encoding == Encoding::Processed
    }

    /// Applies `f` to every pixel, keeping dimensions and state.
    pub fn map_pixels(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> LinearImage {
        LinearImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
            state: self.state,
        }
    }

    pub fn with_state(mut self, state: ImageState) -> Self {
        self.state = state;
        self
    }

    pub fn require_linear(&self, policy: InputPolicy) -> Result<(), ImageError> {
        if self.is_processed() && policy == InputPolicy::RejectProcessed {
            return Err(ImageError::ProcessedInput);
        }
        Ok(())
    }

    pub fn require_dims(&self, width: usize, height: usize) -> Result<(), ImageError> {
        if self.width != width || self.height != height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                width,
                height,
            ));
        }
        Ok(())
    }
}
