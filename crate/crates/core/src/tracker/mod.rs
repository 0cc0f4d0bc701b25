//! Live pipeline (frame → eye crop → translate → detect → map), session
//! recording and the WebSocket service.

mod config;
mod pipeline;
mod record;
mod service;

pub use config::{PipelineConfig, DEFAULT_PORT, DEFAULT_QUEUE_CAPACITY};
pub use pipeline::{load_calibration, run_frame, FrameSource, GazeUpdate, PipelineState};
pub use record::{persist_session, replay_session, SessionRecord, MODEL_FILE, REPORT_FILE, SESSION_FILE};
pub use service::{ClientStats, ServiceHandle, ServiceOptions};

use crate::calibration::CalibrationError;
use crate::cyclegan::EngineError;
use crate::dataset::DatasetError;
use crate::pupil::PupilError;

#[derive(Debug, thiserror::Error)]
pub enum TrackerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("pipeline not ready: {0}")]
    PipelineNotReady(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Pupil(#[from] PupilError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
