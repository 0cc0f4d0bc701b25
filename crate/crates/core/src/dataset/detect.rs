use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::{imageops, GrayImage};
use pico_detect::imageproc::rect::Rect;
use pico_detect::{DetectMultiscale, Detector, Padding, Shaper};
use pico_detect::multiscale::Multiscaler;

use super::{DatasetError, RegionBox};
use crate::types::Frame;

pub const LANDMARK_COUNT: usize = 68;

/// The 68-point facial landmark layout, in frame coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: Vec<(f32, f32)>,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f32, f32)>) -> Result<Self, DatasetError> {
        if points.len() != LANDMARK_COUNT {
            return Err(DatasetError::LandmarkFailure(format!(
                "expected {LANDMARK_COUNT} landmarks, predictor produced {}",
                points.len()
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f32, f32)] {
        &self.points
    }
}

/// Anything that can propose face boxes in a frame.
pub trait FaceDetector {
    fn detect(&mut self, frame: &Frame) -> Vec<RegionBox>;
}

/// Anything that can place the 68 landmarks inside a face box.
pub trait LandmarkPredictor {
    fn predict(&mut self, frame: &Frame, face: RegionBox) -> Vec<(f32, f32)>;
}

impl<F: FnMut(&Frame) -> Vec<RegionBox>> FaceDetector for F {
    fn detect(&mut self, frame: &Frame) -> Vec<RegionBox> {
        self(frame)
    }
}

/// Largest detected face by area; earlier detections win ties.
pub fn detect_face(frame: &Frame, detector: &mut dyn FaceDetector) -> Option<RegionBox> {
    detector
        .detect(frame)
        .into_iter()
        .filter(|b| !b.is_degenerate())
        .fold(None, |best: Option<RegionBox>, b| match best {
            Some(cur) if cur.area() >= b.area() => Some(cur),
            _ => Some(b),
        })
}

pub fn locate_eye_landmarks(
    frame: &Frame,
    face: RegionBox,
    predictor: &mut dyn LandmarkPredictor,
) -> Result<LandmarkSet, DatasetError> {
    if !face.within(frame.width(), frame.height()) {
        return Err(DatasetError::LandmarkFailure(format!(
            "face box {face:?} lies outside the {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    LandmarkSet::new(predictor.predict(frame, face))
}

fn open_model(path: &Path) -> Result<BufReader<File>, DatasetError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| DatasetError::MissingModelFile(path.to_path_buf(), e.to_string()))
}

fn grayscale(frame: &Frame) -> GrayImage {
    imageops::grayscale(&frame.pixels)
}

/// Face detector backed by a pretrained pixel-intensity-comparison cascade file.
pub struct PicoFaceDetector {
    detector: Detector,
    search: DetectMultiscale,
}

impl PicoFaceDetector {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let detector = Detector::load(open_model(path)?)
            .map_err(|e| DatasetError::MissingModelFile(path.to_path_buf(), e.to_string()))?;
        let multiscaler = Multiscaler::new(100, 1000, 0.1, 1.1).expect("static multiscale parameters");
        let search = DetectMultiscale::builder()
            .multiscaler(multiscaler)
            .padding(Padding::default())
            .build()
            .expect("static detector parameters");
        Ok(Self { detector, search })
    }
}

impl FaceDetector for PicoFaceDetector {
    fn detect(&mut self, frame: &Frame) -> Vec<RegionBox> {
        let gray = grayscale(frame);
        self.search
            .run(&self.detector, &gray)
            .into_iter()
            .filter(|d| d.score() > 0.0)
            .map(|d| {
                let t = d.region();
                let half = t.size() / 2.0;
                RegionBox::new(
                    (t.x() - half).round() as i64,
                    (t.y() - half).round() as i64,
                    (t.x() + half).round() as i64,
                    (t.y() + half).round() as i64,
                )
                .clamp(frame.width(), frame.height())
            })
            .collect()
    }
}

/// Landmark predictor backed by a pretrained regression-tree shape model file.
pub struct PicoLandmarkPredictor {
    shaper: Shaper,
}

impl PicoLandmarkPredictor {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let shaper = Shaper::load(open_model(path)?)
            .map_err(|e| DatasetError::MissingModelFile(path.to_path_buf(), e.to_string()))?;
        Ok(Self { shaper })
    }
}

impl LandmarkPredictor for PicoLandmarkPredictor {
    fn predict(&mut self, frame: &Frame, face: RegionBox) -> Vec<(f32, f32)> {
        let gray = grayscale(frame);
        let rect = Rect::at(face.x0 as i32, face.y0 as i32)
            .of_size(face.width().max(1) as u32, face.height().max(1) as u32);
        self.shaper
            .shape(&gray, rect)
            .into_iter()
            .map(|p| (p.x, p.y))
            .collect()
    }
}
