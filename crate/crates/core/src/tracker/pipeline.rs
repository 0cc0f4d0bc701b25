use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, TrackerError};
use crate::calibration::{CalibrationModel, GazePoint};
use crate::cyclegan::{Direction, ModelBundle};
use crate::dataset::{
    crop_resize, detect_face, eye_region_box, locate_eye_landmarks, FaceDetector, LandmarkPredictor,
    PicoFaceDetector, PicoLandmarkPredictor,
};
use crate::pupil::{PupilConfig, PupilDetection};
use crate::types::Frame;

/// One result of the live loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeUpdate {
    pub seq: u64,
    pub t: u64,
    pub pupil: Option<PupilDetection>,
    pub gaze: Option<GazePoint>,
}

impl GazeUpdate {
    /// The `gaze` WebSocket message.
    pub fn to_message(&self) -> serde_json::Value {
        serde_json::json!({
            "type": "gaze",
            "t": self.t,
            "px": self.pupil.map(|p| p.cx),
            "py": self.pupil.map(|p| p.cy),
            "conf": self.pupil.map_or(0.0, |p| p.confidence),
            "sx": self.gaze.map(|g| g.sx),
            "sy": self.gaze.map(|g| g.sy),
            "seq": self.seq,
        })
    }
}

/// Detectors, translation model and calibration of a running tracker.
pub struct PipelineState {
    pub detector: Box<dyn FaceDetector + Send>,
    pub predictor: Box<dyn LandmarkPredictor + Send>,
    pub bundle: Option<Arc<ModelBundle>>,
    pub calibration: Option<CalibrationModel>,
    pub pupil: PupilConfig,
    pub eye_pad: i64,
    seq: u64,
}

impl PipelineState {
    pub fn new(
        detector: Box<dyn FaceDetector + Send>,
        predictor: Box<dyn LandmarkPredictor + Send>,
        bundle: Option<Arc<ModelBundle>>,
    ) -> Self {
        Self {
            detector,
            predictor,
            bundle,
            calibration: None,
            pupil: PupilConfig::default(),
            eye_pad: crate::dataset::DEFAULT_PAD,
            seq: 0,
        }
    }

    /// Builds the state from a validated configuration.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, TrackerError> {
        cfg.validate()?;
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| TrackerError::Config(format!("{what} is required")))
        };
        let detector = PicoFaceDetector::load(need(&cfg.face_model, "face_model")?)?;
        let predictor = PicoLandmarkPredictor::load(need(&cfg.landmark_model, "landmark_model")?)?;
        let bundle = ModelBundle::load(&need(&cfg.checkpoint, "checkpoint")?)?;
        let mut state = Self::new(Box::new(detector), Box::new(predictor), Some(Arc::new(bundle)));
        state.pupil = cfg.pupil.clone();
        state.eye_pad = cfg.eye_pad;
        if let Some(path) = &cfg.calibration {
            state.calibration = Some(load_calibration(path)?);
        }
        Ok(state)
    }

    /// Sequence number of the last update produced.
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

pub fn load_calibration(path: &Path) -> Result<CalibrationModel, TrackerError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Runs one frame through the pipeline. A stage that finds nothing yields a
/// pupil-less update; only a missing model is an error.
pub fn run_frame(frame: &Frame, state: &mut PipelineState) -> Result<GazeUpdate, TrackerError> {
    let bundle = state
        .bundle
        .clone()
        .ok_or_else(|| TrackerError::PipelineNotReady("no translation model loaded".into()))?;
    state.seq += 1;
    let pupil = locate(frame, state, &bundle);
    let gaze = match (&state.calibration, pupil) {
        (Some(model), Some(p)) => Some(model.map(p.cx, p.cy)),
        _ => None,
    };
    Ok(GazeUpdate { seq: state.seq, t: frame.timestamp_ms, pupil, gaze })
}

fn locate(frame: &Frame, state: &mut PipelineState, bundle: &ModelBundle) -> Option<PupilDetection> {
    let face = detect_face(frame, state.detector.as_mut())?;
    let landmarks = locate_eye_landmarks(frame, face, state.predictor.as_mut()).ok()?;
    let region = eye_region_box(&landmarks, state.eye_pad, frame.width(), frame.height()).ok()?;
    let eye = crop_resize(frame, region).ok()?;
    let translated = bundle.translate(&eye, Direction::AtoB).ok()?;
    state.pupil.detect(&translated)
}

/// Frames read in name order from a directory of PNG/JPEG files.
pub struct FrameSource {
    paths: Vec<PathBuf>,
    next: usize,
    frame_interval_ms: u64,
}

impl FrameSource {
    pub fn from_dir(dir: &Path, frame_interval_ms: u64) -> Result<Self, TrackerError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            })
            .collect();
        paths.sort();
        Ok(Self { paths, next: 0, frame_interval_ms })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl Iterator for FrameSource {
    type Item = Result<Frame, TrackerError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.paths.get(self.next)?.clone();
        let t = self.next as u64 * self.frame_interval_ms;
        self.next += 1;
        Some(
            image::open(&path)
                .map(|img| Frame::new(img.to_rgb8(), path.display().to_string(), t))
                .map_err(|e| TrackerError::Dataset(e.into())),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cyclegan::{ArchConfig, TrainingConfig};
    use crate::dataset::RegionBox;
    use image::RgbImage;

    fn tiny_bundle() -> Arc<ModelBundle> {
        let cfg = TrainingConfig {
            arch: ArchConfig { gen_channels: 2, res_blocks: 1, disc_channels: 2, ..Default::default() },
            ..Default::default()
        };
        Arc::new(ModelBundle::new(cfg).unwrap())
    }

    fn no_landmarks() -> Box<dyn LandmarkPredictor + Send> {
        struct Never;
        impl LandmarkPredictor for Never {
            fn predict(&mut self, _: &Frame, _: RegionBox) -> Vec<(f32, f32)> {
                Vec::new()
            }
        }
        Box::new(Never)
    }

    #[test]
    fn no_face_still_advances_sequence() {
        let mut state = PipelineState::new(Box::new(|_: &Frame| Vec::new()), no_landmarks(), Some(tiny_bundle()));
        let frame = Frame::new(RgbImage::new(64, 48), "f", 10);
        let a = run_frame(&frame, &mut state).unwrap();
        let b = run_frame(&frame, &mut state).unwrap();
        assert_eq!((a.seq, b.seq), (1, 2));
        assert!(a.pupil.is_none() && a.gaze.is_none());
        let msg = a.to_message();
        assert_eq!(msg["type"], "gaze");
        assert!(msg["px"].is_null() && msg["sx"].is_null());
    }

    #[test]
    fn landmark_failure_degrades_gracefully() {
        let face = |_: &Frame| vec![RegionBox::new(0, 0, 32, 32)];
        let mut state = PipelineState::new(Box::new(face), no_landmarks(), Some(tiny_bundle()));
        let u = run_frame(&Frame::new(RgbImage::new(64, 48), "f", 0), &mut state).unwrap();
        assert!(u.pupil.is_none());
    }

    #[test]
    fn missing_model_is_not_ready() {
        let mut state = PipelineState::new(Box::new(|_: &Frame| Vec::new()), no_landmarks(), None);
        let r = run_frame(&Frame::new(RgbImage::new(8, 8), "f", 0), &mut state);
        assert!(matches!(r, Err(TrackerError::PipelineNotReady(_))));
        assert_eq!(state.seq(), 0);
    }

    #[test]
    fn frame_directory_is_read_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png", "notes.txt"] {
            if name.ends_with("png") {
                RgbImage::new(4, 3).save(dir.path().join(name)).unwrap();
            } else {
                std::fs::write(dir.path().join(name), "x").unwrap();
            }
        }
        let src = FrameSource::from_dir(dir.path(), 33).unwrap();
        assert_eq!(src.len(), 2);
        let frames: Vec<Frame> = src.map(|f| f.unwrap()).collect();
        assert!(frames[0].source_id.ends_with("a.png"));
        assert_eq!(frames[1].timestamp_ms, 33);
    }
}
