//! Exit-code families: 2 usage, 3 configuration, 4 input data, 1 anything
//! that went wrong while running.

use std::fmt;

use greeneye_core::calibration::CalibrationError;
use greeneye_core::cyclegan::EngineError;
use greeneye_core::dataset::DatasetError;
use greeneye_core::pupil::PupilError;
use greeneye_core::tracker::TrackerError;

pub const USAGE: u8 = 2;
pub const CONFIG: u8 = 3;
pub const DATA: u8 = 4;
pub const RUNTIME: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: CONFIG, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: DATA, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: USAGE, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn code_of_dataset(e: &DatasetError) -> u8 {
    match e {
        DatasetError::MissingModelFile(..) => CONFIG,
        _ => DATA,
    }
}

fn code_of_engine(e: &EngineError) -> u8 {
    match e {
        EngineError::InvalidConfig(_) | EngineError::UnknownLayerName(_) => CONFIG,
        EngineError::NonFiniteLoss { .. } => RUNTIME,
        EngineError::Dataset(d) => code_of_dataset(d),
        _ => DATA,
    }
}

fn code_of_calibration(e: &CalibrationError) -> u8 {
    match e {
        CalibrationError::InvalidGeometry(_) | CalibrationError::GridOverflow { .. } => CONFIG,
        _ => DATA,
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Self { code: code_of_dataset(&e), message: e.to_string() }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Self { code: code_of_engine(&e), message: e.to_string() }
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        Self { code: code_of_calibration(&e), message: e.to_string() }
    }
}

impl From<PupilError> for Failure {
    fn from(e: PupilError) -> Self {
        let code = match e {
            PupilError::InvalidElement(_) => CONFIG,
            _ => RUNTIME,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<TrackerError> for Failure {
    fn from(e: TrackerError) -> Self {
        let code = match &e {
            TrackerError::Config(_) | TrackerError::PortInUse(_) | TrackerError::PipelineNotReady(_) => CONFIG,
            TrackerError::Dataset(d) => code_of_dataset(d),
            TrackerError::Engine(d) => code_of_engine(d),
            TrackerError::Calibration(d) => code_of_calibration(d),
            TrackerError::Pupil(_) => RUNTIME,
            TrackerError::Io(_) | TrackerError::Json(_) => DATA,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: RUNTIME, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}
