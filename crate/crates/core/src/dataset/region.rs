use serde::{Deserialize, Serialize};

use super::{DatasetError, LandmarkSet};

/// Landmark indices outlining one eye in the 68-point layout.
pub const EYE_POINTS: std::ops::RangeInclusive<usize> = 36..=41;

/// Padding added around the eye contour, in frame pixels.
pub const DEFAULT_PAD: i64 = 30;

/// Axis-aligned pixel box, inclusive of `(x0, y0)` and exclusive of `(x1, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl RegionBox {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    /// Zero for inverted or empty boxes.
    pub fn area(&self) -> i64 {
        self.width().max(0) * self.height().max(0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() == 0
    }

    pub fn clamp(&self, width: u32, height: u32) -> Self {
        let (w, h) = (width as i64, height as i64);
        Self {
            x0: self.x0.clamp(0, w),
            y0: self.y0.clamp(0, h),
            x1: self.x1.clamp(0, w),
            y1: self.y1.clamp(0, h),
        }
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0
            && self.y0 >= 0
            && self.x1 <= width as i64
            && self.y1 <= height as i64
            && !self.is_degenerate()
    }

    fn as_tuple(&self) -> (i64, i64, i64, i64) {
        (self.x0, self.y0, self.x1, self.y1)
    }
}

/// Bounding box of landmarks 36–41 grown by `pad` on each side and clamped to
/// the frame.
///
/// Eye points are rounded to the nearest pixel before boxing; the right and
/// bottom edges sit at `max + pad`, matching the exclusive convention.
pub fn eye_region_box(
    landmarks: &LandmarkSet,
    pad: i64,
    width: u32,
    height: u32,
) -> Result<RegionBox, DatasetError> {
    let pts = &landmarks.points()[EYE_POINTS];
    let xs = pts.iter().map(|p| p.0.round() as i64);
    let ys = pts.iter().map(|p| p.1.round() as i64);
    let (min_x, max_x) = (xs.clone().min().unwrap(), xs.max().unwrap());
    let (min_y, max_y) = (ys.clone().min().unwrap(), ys.max().unwrap());
    let raw = RegionBox::new(min_x - pad, min_y - pad, max_x + pad, max_y + pad);
    let clamped = raw.clamp(width, height);
    if clamped.is_degenerate() {
        return Err(DatasetError::DegenerateRegion(clamped.as_tuple()));
    }
    Ok(clamped)
}
