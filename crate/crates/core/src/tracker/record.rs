use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrackerError;
use crate::calibration::{
    calibrate_from_samples, read_session, write_session, CalibrationModel, ErrorGrid, GazeSample, ScreenGeometry,
};

pub const SESSION_FILE: &str = "session.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.csv";
const CONFIG_FILE: &str = "config.json";

/// A finished calibration session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub config: serde_json::Value,
    pub samples: Vec<GazeSample>,
    pub model: CalibrationModel,
    pub report: ErrorGrid,
}

impl SessionRecord {
    /// Fits and evaluates `samples`; the same computation `replay_session` runs.
    pub fn from_samples(
        samples: Vec<GazeSample>,
        geometry: &ScreenGeometry,
        settle_s: f64,
        config: serde_json::Value,
    ) -> Result<Self, TrackerError> {
        let outcome = calibrate_from_samples(&samples, geometry, settle_s)?;
        Ok(Self { config, samples, model: outcome.model, report: outcome.report })
    }
}

/// Writes the model, report, and (when `with_samples`) the sample log and
/// config snapshot into `dir`.
pub fn persist_session(dir: &Path, record: &SessionRecord, with_samples: bool) -> Result<(), TrackerError> {
    fs::create_dir_all(dir)?;
    let mut model = serde_json::to_string_pretty(&record.model)?;
    model.push('\n');
    fs::write(dir.join(MODEL_FILE), model)?;
    fs::write(dir.join(REPORT_FILE), record.report.to_csv())?;
    if with_samples {
        write_session(&dir.join(SESSION_FILE), &record.samples)?;
        let mut cfg = serde_json::to_string_pretty(&record.config)?;
        cfg.push('\n');
        fs::write(dir.join(CONFIG_FILE), cfg)?;
    }
    Ok(())
}

/// Refits a recorded session file and writes `model.json` and `report.csv`.
pub fn replay_session(
    session: &Path,
    geometry: &ScreenGeometry,
    settle_s: f64,
    out: &Path,
) -> Result<SessionRecord, TrackerError> {
    let samples = read_session(session)?;
    let record = SessionRecord::from_samples(samples, geometry, settle_s, serde_json::Value::Null)?;
    persist_session(out, &record, false)?;
    Ok(record)
}
