use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{pixels_to_degrees, CalibrationError, CalibrationTarget, ScreenGeometry};
use crate::dataset::round_half_up;

pub const GRID_ROWS: usize = 4;
pub const GRID_COLS: usize = 5;

/// One gaze estimate in screen pixels for a known target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialEstimate {
    pub target: u8,
    pub sx: f64,
    pub sy: f64,
}

/// Mean angular error per target, laid out like the calibration grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorGrid {
    pub cells: [[f64; GRID_COLS]; GRID_ROWS],
    pub mean: f64,
}

impl ErrorGrid {
    pub fn from_cells(cells: [[f64; GRID_COLS]; GRID_ROWS]) -> Self {
        let mean = cells.iter().flatten().sum::<f64>() / (GRID_ROWS * GRID_COLS) as f64;
        Self { cells, mean }
    }

    /// Cells rounded half-up to whole degrees.
    pub fn rounded_cells(&self) -> [[i64; GRID_COLS]; GRID_ROWS] {
        self.cells.map(|row| row.map(round_half_up))
    }

    /// Text table with integer cells and the one-decimal mean.
    pub fn render(&self) -> String {
        let mut s = String::from("Position");
        for c in 1..=GRID_COLS {
            write!(s, "\t{c}").unwrap();
        }
        s.push('\n');
        for (r, row) in self.rounded_cells().iter().enumerate() {
            write!(s, "{}", r + 1).unwrap();
            for v in row {
                write!(s, "\t{v}").unwrap();
            }
            s.push('\n');
        }
        writeln!(s, "mean_deg={:.1}", self.mean).unwrap();
        s
    }

    /// Four rows of five raw cell means, then `mean_deg,<value>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.cells {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        writeln!(s, "mean_deg,{:.6}", self.mean).unwrap();
        s
    }
}

/// Averages the angular error of every trial per target.
pub fn evaluate_grid(
    trials: &[TrialEstimate],
    targets: &[CalibrationTarget],
    geometry: &ScreenGeometry,
) -> Result<ErrorGrid, CalibrationError> {
    let mut cells = [[0.0; GRID_COLS]; GRID_ROWS];
    for t in targets {
        let errors: Vec<f64> = trials
            .iter()
            .filter(|e| e.target == t.index)
            .map(|e| pixels_to_degrees((e.sx - t.center.0, e.sy - t.center.1), geometry))
            .collect();
        if errors.is_empty() {
            return Err(CalibrationError::MissingTarget(t.index));
        }
        cells[t.row as usize - 1][t.col as usize - 1] = errors.iter().sum::<f64>() / errors.len() as f64;
    }
    Ok(ErrorGrid::from_cells(cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::calibration_targets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) const PUBLISHED_GRID: [[f64; 5]; 4] = [
        [1.0, 2.0, 1.0, 1.0, 2.0],
        [1.0, 2.0, 1.0, 2.0, 2.0],
        [1.0, 2.0, 2.0, 2.0, 3.0],
        [2.0, 1.0, 2.0, 2.0, 2.0],
    ];

    #[test]
    fn published_grid_mean() {
        let g = ErrorGrid::from_cells(PUBLISHED_GRID);
        // (7 + 8 + 10 + 9) / 20
        assert!((g.mean - 1.7).abs() < 1e-12);
        assert!(g.render().contains("mean_deg=1.7"));
        assert!(g.render().starts_with("Position\t1\t2\t3\t4\t5\n1\t1\t2\t1\t1\t2\n"));
        assert!(g.to_csv().ends_with("mean_deg,1.700000\n"));
    }

    #[test]
    fn perfect_estimates_give_zero() {
        let geo = ScreenGeometry::default();
        let targets = calibration_targets(&geo).unwrap();
        let trials: Vec<_> = targets.iter().map(|t| TrialEstimate { target: t.index, sx: t.center.0, sy: t.center.1 }).collect();
        let g = evaluate_grid(&trials, &targets, &geo).unwrap();
        assert_eq!(g.mean, 0.0);
        assert!(g.cells.iter().flatten().all(|c| *c == 0.0));
        assert!(matches!(evaluate_grid(&trials[1..], &targets, &geo), Err(CalibrationError::MissingTarget(1))));
    }

    #[test]
    fn mean_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut cells = [[0.0; 5]; 4];
            let mut sum = 0.0;
            for r in 0..4 {
                for c in 0..5 {
                    cells[r][c] = rng.gen_range(0.0..5.0);
                    sum += cells[r][c];
                }
            }
            assert!((ErrorGrid::from_cells(cells).mean - sum / 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rounding_is_half_up() {
        let mut cells = [[0.0; 5]; 4];
        cells[0][0] = 1.5;
        cells[0][1] = 2.49;
        cells[0][2] = 0.5;
        let r = ErrorGrid::from_cells(cells).rounded_cells();
        assert_eq!(&r[0][..3], &[2, 2, 1]);
    }
}
