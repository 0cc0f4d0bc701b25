use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrackerError;
use crate::calibration::{ScreenGeometry, DEFAULT_SETTLE_S};
use crate::cyclegan::TrainingConfig;
use crate::dataset::DEFAULT_PAD;
use crate::pupil::PupilConfig;

pub const DEFAULT_PORT: u16 = 8765;
pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

/// Everything the live loop needs; read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Face cascade file.
    pub face_model: Option<PathBuf>,
    /// 68-point landmark model file.
    pub landmark_model: Option<PathBuf>,
    /// Checkpoint directory holding `manifest.json`.
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    /// Fitted calibration model JSON; gaze is mapped only when present.
    pub calibration: Option<PathBuf>,
    /// Directory of frames used instead of a camera.
    pub frames_dir: Option<PathBuf>,
    pub camera_index: u32,
    pub eye_pad: i64,
    pub pupil: PupilConfig,
    pub geometry: ScreenGeometry,
    pub settle_s: f64,
    pub port: u16,
    pub queue_capacity: usize,
    /// Where calibration sessions are persisted.
    pub session_dir: Option<PathBuf>,
    pub seed: u64,
    /// Used by `train` and `finetune`; `seed` above overrides `training.seed`.
    pub training: TrainingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            face_model: None,
            landmark_model: None,
            checkpoint: None,
            dataset: None,
            calibration: None,
            frames_dir: None,
            camera_index: 0,
            eye_pad: DEFAULT_PAD,
            pupil: PupilConfig::default(),
            geometry: ScreenGeometry::default(),
            settle_s: DEFAULT_SETTLE_S,
            port: DEFAULT_PORT,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            session_dir: None,
            seed: 0,
            training: TrainingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, TrackerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrackerError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| TrackerError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks values and that every referenced path exists.
    pub fn validate(&self) -> Result<(), TrackerError> {
        let paths = [
            ("face_model", &self.face_model),
            ("landmark_model", &self.landmark_model),
            ("checkpoint", &self.checkpoint),
            ("dataset", &self.dataset),
            ("calibration", &self.calibration),
            ("frames_dir", &self.frames_dir),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(TrackerError::Config(format!("{name} path {} does not exist", p.display())));
                }
            }
        }
        if self.eye_pad < 0 {
            return Err(TrackerError::Config("eye_pad must be non-negative".into()));
        }
        if !(self.settle_s >= 0.0 && self.settle_s.is_finite()) {
            return Err(TrackerError::Config("settle_s must be non-negative".into()));
        }
        if self.queue_capacity == 0 {
            return Err(TrackerError::Config("queue_capacity must be at least 1".into()));
        }
        self.pupil.validate().map_err(|e| TrackerError::Config(e.to_string()))?;
        self.geometry.validate().map_err(|e| TrackerError::Config(e.to_string()))?;
        self.training_config().validate().map_err(|e| TrackerError::Config(e.to_string()))?;
        Ok(())
    }

    /// The training section with the top-level seed applied.
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig { seed: self.seed, ..self.training.clone() }
    }
}
