use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CalibrationError, ScreenGeometry};

/// Terms of `[1, px, py, px·py, px², py²]`.
pub const BASIS_LEN: usize = 6;

fn basis(px: f64, py: f64) -> [f64; BASIS_LEN] {
    [1.0, px, py, px * py, px * px, py * py]
}

/// Per-axis quadratic pupil→screen polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub coeff_x: [f64; BASIS_LEN],
    pub coeff_y: [f64; BASIS_LEN],
    /// Root-mean-square fit residual in screen pixels, per axis.
    pub rms_x: f64,
    pub rms_y: f64,
    pub points: usize,
    pub geometry: ScreenGeometry,
}

/// A mapped gaze point; off-screen points are reported, not clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub sx: f64,
    pub sy: f64,
    pub on_screen: bool,
}

impl CalibrationModel {
    pub fn map(&self, px: f64, py: f64) -> GazePoint {
        let b = basis(px, py);
        let dot = |c: &[f64; BASIS_LEN]| c.iter().zip(&b).map(|(c, b)| c * b).sum::<f64>();
        let (sx, sy) = (dot(&self.coeff_x), dot(&self.coeff_y));
        GazePoint { sx, sy, on_screen: self.geometry.contains(sx, sy) }
    }

    /// Residual RMS over both axes.
    pub fn rms(&self) -> f64 {
        ((self.rms_x * self.rms_x + self.rms_y * self.rms_y) / 2.0).sqrt()
    }
}

pub fn map_gaze(model: &CalibrationModel, pupil: (f64, f64)) -> GazePoint {
    model.map(pupil.0, pupil.1)
}

/// Least-squares fit of both axes. Basis columns are scaled to unit norm
/// before the SVD so pixel-squared terms do not swamp the constant term.
pub fn fit_mapping(
    pupil: &[(f64, f64)],
    screen: &[(f64, f64)],
    geometry: &ScreenGeometry,
) -> Result<CalibrationModel, CalibrationError> {
    if pupil.len() != screen.len() {
        return Err(CalibrationError::LengthMismatch(pupil.len(), screen.len()));
    }
    let n = pupil.len();
    if n < BASIS_LEN {
        return Err(CalibrationError::TooFewPoints { found: n, needed: BASIS_LEN });
    }
    let mut a = DMatrix::<f64>::zeros(n, BASIS_LEN);
    for (i, &(px, py)) in pupil.iter().enumerate() {
        for (j, v) in basis(px, py).into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    let scale: Vec<f64> = (0..BASIS_LEN)
        .map(|j| {
            let norm = a.column(j).norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-10 * n as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < BASIS_LEN {
        return Err(CalibrationError::RankDeficient { rank, needed: BASIS_LEN });
    }
    let solve = |target: DVector<f64>| -> Result<([f64; BASIS_LEN], f64), CalibrationError> {
        let sol = svd
            .solve(&target, tol)
            .map_err(|_| CalibrationError::RankDeficient { rank, needed: BASIS_LEN })?;
        let resid = &a * &sol - &target;
        let rms = (resid.norm_squared() / n as f64).sqrt();
        let mut coeff = [0.0; BASIS_LEN];
        for j in 0..BASIS_LEN {
            coeff[j] = sol[j] / scale[j];
        }
        Ok((coeff, rms))
    };
    let (coeff_x, rms_x) = solve(DVector::from_iterator(n, screen.iter().map(|p| p.0)))?;
    let (coeff_y, rms_y) = solve(DVector::from_iterator(n, screen.iter().map(|p| p.1)))?;
    Ok(CalibrationModel { coeff_x, coeff_y, rms_x, rms_y, points: n, geometry: *geometry })
}
