//! Procedural eye crops for tests, benchmarks and smoke runs.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{paint_pupil, write_labels, DatasetError, DatasetPair, LabelRow, PupilLabel, TRAIN_A, TRAIN_B, LABELS_FILE};
use crate::types::{EyeImage, MarkerColor, Provenance, EYE_HEIGHT, EYE_WIDTH};

pub const SKIN: [u8; 3] = [200, 160, 140];
pub const SCLERA: [u8; 3] = [230, 225, 220];
pub const IRIS: [u8; 3] = [95, 65, 40];
pub const PUPIL: [u8; 3] = [20, 20, 24];

/// A flat-shaded eye: skin, an elliptical sclera, and a concentric iris and
/// pupil centred on `(cx, cy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticEye {
    pub cx: f64,
    pub cy: f64,
    pub pupil_radius: f64,
    pub iris_radius: f64,
}

impl SyntheticEye {
    pub fn new(cx: f64, cy: f64) -> Self {
        Self { cx, cy, pupil_radius: 12.0, iris_radius: 32.0 }
    }

    pub fn render(&self) -> EyeImage {
        let (w, h) = (EYE_WIDTH as f64, EYE_HEIGHT as f64);
        let img = RgbImage::from_fn(EYE_WIDTH, EYE_HEIGHT, |x, y| {
            let (x, y) = (x as f64, y as f64);
            let d = (x - self.cx).hypot(y - self.cy);
            let (ex, ey) = ((x - w / 2.0) / (0.425 * w), (y - h / 2.0) / (0.3 * h));
            Rgb(if d <= self.pupil_radius {
                PUPIL
            } else if d <= self.iris_radius {
                IRIS
            } else if ex * ex + ey * ey <= 1.0 {
                SCLERA
            } else {
                SKIN
            })
        });
        EyeImage::new(img, Provenance::Raw).expect("synthetic eyes are eye-sized")
    }

    /// The label a human would draw: the pupil disk, centre rounded to pixels.
    pub fn label(&self) -> PupilLabel {
        PupilLabel::new(self.cx.round(), self.cy.round(), self.pupil_radius)
    }
}

/// Writes `count` seeded eyes as a paired dataset: raw crops in domain A,
/// the same crops with the pupil painted in domain B, and their labels.
pub fn write_synthetic_pair(root: &Path, count: usize, seed: u64, pupil_radius: f64) -> Result<DatasetPair, DatasetError> {
    fs::create_dir_all(root.join(TRAIN_A))?;
    fs::create_dir_all(root.join(TRAIN_B))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let eye = SyntheticEye {
            pupil_radius,
            ..SyntheticEye::new(rng.gen_range(120..280) as f64, rng.gen_range(100..200) as f64)
        };
        let name = format!("eye{i:03}.png");
        let raw = eye.render();
        raw.pixels().save(root.join(TRAIN_A).join(&name))?;
        let label = eye.label();
        paint_pupil(&raw, &label, MarkerColor::DEFAULT)?.pixels().save(root.join(TRAIN_B).join(&name))?;
        rows.push(LabelRow { filename: name, cx: label.cx as i64, cy: label.cy as i64, radius: pupil_radius.round() as i64 });
    }
    write_labels(&root.join(LABELS_FILE), &rows)?;
    DatasetPair::load(root)
}
