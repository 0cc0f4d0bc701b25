use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// Physical area of one calibration square, 7.8 cm².
pub const SQUARE_AREA_MM2: f64 = 780.0;

/// Monitor size, resolution and viewing distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenGeometry {
    pub diagonal_mm: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub viewing_distance_mm: f64,
}

impl Default for ScreenGeometry {
    /// 22-inch 1366×768 monitor viewed from 500 mm.
    fn default() -> Self {
        Self {
            diagonal_mm: 22.0 * 25.4,
            width_px: 1366,
            height_px: 768,
            viewing_distance_mm: 500.0,
        }
    }
}

impl ScreenGeometry {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::InvalidGeometry(m.into()));
        if !(self.diagonal_mm > 0.0 && self.diagonal_mm.is_finite()) {
            return bad("diagonal must be positive");
        }
        if self.width_px == 0 || self.height_px == 0 {
            return bad("resolution must be non-zero");
        }
        if !(self.viewing_distance_mm > 0.0 && self.viewing_distance_mm.is_finite()) {
            return bad("viewing distance must be positive");
        }
        Ok(())
    }

    fn diagonal_px(&self) -> f64 {
        (self.width_px as f64).hypot(self.height_px as f64)
    }

    pub fn physical_width_mm(&self) -> f64 {
        self.diagonal_mm * self.width_px as f64 / self.diagonal_px()
    }

    pub fn physical_height_mm(&self) -> f64 {
        self.diagonal_mm * self.height_px as f64 / self.diagonal_px()
    }

    /// Horizontal millimetres per pixel.
    pub fn pixel_pitch(&self) -> f64 {
        self.physical_width_mm() / self.width_px as f64
    }

    pub fn vertical_pitch(&self) -> f64 {
        self.physical_height_mm() / self.height_px as f64
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width_px as f64).contains(&x) && (0.0..=self.height_px as f64).contains(&y)
    }

    /// Side in pixels of a square covering [`SQUARE_AREA_MM2`].
    pub fn square_side_px(&self) -> u32 {
        (SQUARE_AREA_MM2.sqrt() / self.pixel_pitch()).round() as u32
    }
}

pub fn pixel_pitch(geometry: &ScreenGeometry) -> f64 {
    geometry.pixel_pitch()
}

/// Visual angle in degrees subtended by an on-screen offset in pixels.
pub fn pixels_to_degrees(offset: (f64, f64), geometry: &ScreenGeometry) -> f64 {
    let mm = offset.0.hypot(offset.1) * geometry.pixel_pitch();
    (mm / geometry.viewing_distance_mm).atan().to_degrees()
}

/// One square of the calibration sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    /// 1..=20, row-major.
    pub index: u8,
    pub row: u8,
    pub col: u8,
    pub center: (f64, f64),
    pub square_side: u32,
    pub color: [u8; 3],
    pub dwell_s: f64,
}

pub(crate) const DEFAULT_DWELL_S: f64 = 5.0;

// Fully saturated hue, evenly spaced around the wheel.
fn bright_color(i: usize, n: usize) -> [u8; 3] {
    let h = i as f64 * 6.0 / n as f64;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0f64).round() as u8, (g * 255.0f64).round() as u8, (b * 255.0f64).round() as u8]
}

/// The 4×5 grid of squares, centred in equal cells so margins are uniform.
pub fn calibration_targets(geometry: &ScreenGeometry) -> Result<Vec<CalibrationTarget>, CalibrationError> {
    geometry.validate()?;
    let (rows, cols) = (super::GRID_ROWS as u32, super::GRID_COLS as u32);
    let side = geometry.square_side_px();
    let cell_w = geometry.width_px as f64 / cols as f64;
    let cell_h = geometry.height_px as f64 / rows as f64;
    if side as f64 > cell_w || side as f64 > cell_h {
        return Err(CalibrationError::GridOverflow {
            rows,
            cols,
            side,
            width: geometry.width_px,
            height: geometry.height_px,
        });
    }
    let n = (rows * cols) as usize;
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            let i = (r * cols + c) as usize;
            out.push(CalibrationTarget {
                index: i as u8 + 1,
                row: r as u8 + 1,
                col: c as u8 + 1,
                center: ((c as f64 + 0.5) * cell_w, (r as f64 + 0.5) * cell_h),
                square_side: side,
                color: bright_color(i, n),
                dwell_s: DEFAULT_DWELL_S,
            });
        }
    }
    Ok(out)
}
