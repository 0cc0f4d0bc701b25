//! Turning camera frames and annotated photo collections into the two
//! 400×300 training domains: raw eye crops and green-pupil eye crops.

mod convert;
mod detect;
mod label;
mod region;
mod resize;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use convert::{
    build_domain_pair, convert_annotated_dataset, plan_domain_pair, read_labels, write_labels,
    ConversionReport, DatasetPair, LabelRow, RowError, SourceSize, LABELS_FILE, TRAIN_A, TRAIN_B,
};
pub use detect::{
    detect_face, locate_eye_landmarks, FaceDetector, LandmarkPredictor, LandmarkSet,
    PicoFaceDetector, PicoLandmarkPredictor, LANDMARK_COUNT,
};
pub use label::{marker_pixel_count, paint_pupil, round_half_up, PupilLabel, DEFAULT_RADIUS};
pub use region::{eye_region_box, RegionBox, DEFAULT_PAD, EYE_POINTS};
pub use resize::{crop_resize, resize_to_eye};
pub use synthetic::{write_synthetic_pair, SyntheticEye};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("model file {0} could not be loaded: {1}")]
    MissingModelFile(PathBuf, String),
    #[error("landmark prediction failed: {0}")]
    LandmarkFailure(String),
    #[error("region {0:?} has zero area")]
    DegenerateRegion((i64, i64, i64, i64)),
    #[error("invalid pupil label: {0}")]
    InvalidLabel(String),
    #[error("image {0} does not exist")]
    MissingImage(PathBuf),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate filename {0}")]
    DuplicateFilename(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
