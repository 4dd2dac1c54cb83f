//! Batch orchestration: configuration, scene simulation, the measurement run
//! and its provenance logs.
//!
//! Exit codes are a stable contract: see [`exit`].

pub mod config;
pub mod provenance;
pub mod report;
pub mod run;
pub mod simulate;

use thiserror::Error;

use crate::chart::ChartError;
use crate::colorimetry::ColorError;
use crate::image::ImageError;
use crate::io::IoError;
use crate::isp::IspError;
use crate::linearity::LinearityError;
use crate::spectral::SpectrumError;
use crate::water::WaterError;

pub use config::{load_config, PipelineConfig, WaterMode};
pub use provenance::{validate_log, ProvenanceLog, RunStatus, SCHEMA_VERSION};
pub use report::render_report;
pub use run::{run, white_observation, ImageOutcome, RunOutcome};
pub use simulate::{simulate, simulate_scene, SceneConfig, SimulatedScene, SimulationOutput};

pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const LINEARITY: i32 = 3;
    pub const RECOVERY: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("linearity check failed: {0}")]
    Linearity(String),
    #[error("water recovery or estimation failed: {0}")]
    Recovery(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => exit::VALIDATION,
            PipelineError::Linearity(_) => exit::LINEARITY,
            PipelineError::Recovery(_) => exit::RECOVERY,
            PipelineError::Io(_) => exit::IO,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Validation(_) => "validation",
            PipelineError::Linearity(_) => "linearity",
            PipelineError::Recovery(_) => "recovery",
            PipelineError::Io(_) => "io",
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::EightBit(_) | IoError::Unsupported(..) => PipelineError::Validation(e.to_string()),
            _ => PipelineError::Io(e.to_string()),
        }
    }
}

impl From<ChartError> for PipelineError {
    fn from(e: ChartError) -> Self {
        match e {
            ChartError::Io { .. } | ChartError::Json { .. } => PipelineError::Io(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

impl From<WaterError> for PipelineError {
    fn from(e: WaterError) -> Self {
        match e {
            WaterError::Image(_) | WaterError::InvalidThreshold(_) => {
                PipelineError::Validation(e.to_string())
            }
            _ => PipelineError::Recovery(e.to_string()),
        }
    }
}

impl From<ColorError> for PipelineError {
    fn from(e: ColorError) -> Self {
        match e {
            ColorError::Image(_) | ColorError::WrongSpace { .. } => {
                PipelineError::Validation(e.to_string())
            }
            _ => PipelineError::Recovery(e.to_string()),
        }
    }
}

impl From<LinearityError> for PipelineError {
    fn from(e: LinearityError) -> Self {
        PipelineError::Linearity(e.to_string())
    }
}

impl From<ImageError> for PipelineError {
    fn from(e: ImageError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<SpectrumError> for PipelineError {
    fn from(e: SpectrumError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

impl From<IspError> for PipelineError {
    fn from(e: IspError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}
