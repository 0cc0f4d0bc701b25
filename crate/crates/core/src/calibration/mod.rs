//! Calibration grid, pupil→screen mapping and angular error evaluation.

mod fit;
mod geometry;
mod grid;
mod session;

pub use fit::{fit_mapping, map_gaze, CalibrationModel, GazePoint, BASIS_LEN};
pub use geometry::{calibration_targets, pixel_pitch, pixels_to_degrees, CalibrationTarget, ScreenGeometry, SQUARE_AREA_MM2};
pub use grid::{evaluate_grid, ErrorGrid, TrialEstimate, GRID_COLS, GRID_ROWS};
pub use session::{
    aggregate_fixation, calibrate_from_samples, evaluation_trials, read_session, write_session, GazeSample, ReplayOutcome,
    DEFAULT_SETTLE_S, MIN_FIXATION_SAMPLES,
};

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid screen geometry: {0}")]
    InvalidGeometry(String),
    #[error("a {rows}x{cols} grid of {side}px squares does not fit on a {width}x{height} screen")]
    GridOverflow { rows: u32, cols: u32, side: u32, width: u32, height: u32 },
    #[error("target {target:?}: {found} samples after the settle window, need at least {needed}")]
    InsufficientSamples { target: Option<u8>, found: usize, needed: usize },
    #[error("need at least {needed} calibration points, got {found}")]
    TooFewPoints { found: usize, needed: usize },
    #[error("calibration points do not determine the quadratic mapping (rank {rank} of {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("point lists differ in length: {0} pupil vs {1} screen")]
    LengthMismatch(usize, usize),
    #[error("no trials for target {0}")]
    MissingTarget(u8),
    #[error("session line {line}: {reason}")]
    MalformedSession { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
