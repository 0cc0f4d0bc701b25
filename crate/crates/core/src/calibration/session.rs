use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::DEFAULT_DWELL_S;
use super::{
    calibration_targets, evaluate_grid, fit_mapping, CalibrationError, CalibrationModel, ErrorGrid, ScreenGeometry,
    TrialEstimate,
};

pub const DEFAULT_SETTLE_S: f64 = 0.5;
pub const MIN_FIXATION_SAMPLES: usize = 5;

/// One pupil observation; a line of a session file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Milliseconds.
    pub t: u64,
    pub px: f64,
    pub py: f64,
    pub target: Option<u8>,
    pub conf: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

// Samples inside [first + settle, first + dwell].
fn fixation_window(samples: &[GazeSample], dwell_s: f64, settle_s: f64) -> Vec<GazeSample> {
    let Some(t0) = samples.iter().map(|s| s.t).min() else {
        return Vec::new();
    };
    let lo = t0 as f64 + settle_s * 1000.0;
    let hi = t0 as f64 + dwell_s * 1000.0;
    samples
        .iter()
        .filter(|s| (s.t as f64) >= lo && (s.t as f64) <= hi)
        .copied()
        .collect()
}

/// Coordinate-wise median pupil position of one fixation, ignoring the first
/// `settle_s` seconds and anything after `dwell_s`.
pub fn aggregate_fixation(samples: &[GazeSample], dwell_s: f64, settle_s: f64) -> Result<(f64, f64), CalibrationError> {
    let kept = fixation_window(samples, dwell_s, settle_s);
    if kept.len() < MIN_FIXATION_SAMPLES {
        return Err(CalibrationError::InsufficientSamples {
            target: samples.first().and_then(|s| s.target),
            found: kept.len(),
            needed: MIN_FIXATION_SAMPLES,
        });
    }
    let mut xs: Vec<f64> = kept.iter().map(|s| s.px).collect();
    let mut ys: Vec<f64> = kept.iter().map(|s| s.py).collect();
    Ok((median(&mut xs), median(&mut ys)))
}

pub fn read_session(path: &Path) -> Result<Vec<GazeSample>, CalibrationError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: GazeSample = serde_json::from_str(&line)
            .map_err(|e| CalibrationError::MalformedSession { line: i + 1, reason: e.to_string() })?;
        if let Some(t) = sample.target {
            if !(1..=20).contains(&t) {
                return Err(CalibrationError::MalformedSession { line: i + 1, reason: format!("target {t} outside 1..20") });
            }
        }
        if out.last().is_some_and(|p: &GazeSample| p.t > sample.t) {
            return Err(CalibrationError::MalformedSession { line: i + 1, reason: "timestamps must not decrease".into() });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_session(path: &Path, samples: &[GazeSample]) -> Result<(), CalibrationError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Fitted model, per-target fixations and the evaluation grid of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub fixations: Vec<(u8, f64, f64)>,
    pub model: CalibrationModel,
    pub report: ErrorGrid,
}

fn by_target(samples: &[GazeSample], index: u8) -> Vec<GazeSample> {
    samples.iter().filter(|s| s.target == Some(index)).copied().collect()
}

/// Screen-space trials for every target: samples after the settle window,
/// passed through `map`.
pub fn evaluation_trials(
    samples: &[GazeSample],
    settle_s: f64,
    map: impl Fn(f64, f64) -> (f64, f64),
) -> Vec<TrialEstimate> {
    let mut out = Vec::new();
    for index in 1..=20u8 {
        for s in fixation_window(&by_target(samples, index), f64::INFINITY, settle_s) {
            let (sx, sy) = map(s.px, s.py);
            out.push(TrialEstimate { target: index, sx, sy });
        }
    }
    out
}

/// Fits the mapping on per-target fixation medians and scores every
/// post-settle sample against its target.
pub fn calibrate_from_samples(
    samples: &[GazeSample],
    geometry: &ScreenGeometry,
    settle_s: f64,
) -> Result<ReplayOutcome, CalibrationError> {
    let targets = calibration_targets(geometry)?;
    let mut fixations = Vec::with_capacity(targets.len());
    let mut pupil = Vec::new();
    let mut screen = Vec::new();
    for t in &targets {
        let group = by_target(samples, t.index);
        if group.is_empty() {
            return Err(CalibrationError::MissingTarget(t.index));
        }
        let (px, py) = aggregate_fixation(&group, DEFAULT_DWELL_S.max(t.dwell_s), settle_s)?;
        fixations.push((t.index, px, py));
        pupil.push((px, py));
        screen.push(t.center);
    }
    let model = fit_mapping(&pupil, &screen, geometry)?;
    let trials = evaluation_trials(samples, settle_s, |x, y| {
        let g = model.map(x, y);
        (g.sx, g.sy)
    });
    let report = evaluate_grid(&trials, &targets, geometry)?;
    Ok(ReplayOutcome { fixations, model, report })
}
