use image::Rgb;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::types::{EyeImage, MarkerColor, Provenance, EYE_HEIGHT, EYE_WIDTH};

/// Paint radius used when a label does not carry one, at 400×300 scale.
pub const DEFAULT_RADIUS: f64 = 12.0;

/// Pupil disk in eye-image pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PupilLabel {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl PupilLabel {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        Self { cx, cy, radius }
    }

    /// Pixel centre the disk is painted around.
    pub fn paint_center(&self) -> (i64, i64) {
        (round_half_up(self.cx), round_half_up(self.cy))
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.radius >= 1.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(DatasetError::InvalidLabel(format!(
                "radius {} must be at least 1 and the centre finite",
                self.radius
            )));
        }
        let (cx, cy) = self.paint_center();
        let nx = cx.clamp(0, EYE_WIDTH as i64 - 1);
        let ny = cy.clamp(0, EYE_HEIGHT as i64 - 1);
        let d2 = ((nx - cx).pow(2) + (ny - cy).pow(2)) as f64;
        if d2 > self.radius * self.radius {
            return Err(DatasetError::InvalidLabel(format!(
                "disk at ({}, {}) r={} misses the {EYE_WIDTH}x{EYE_HEIGHT} canvas",
                self.cx, self.cy, self.radius
            )));
        }
        Ok(())
    }
}

/// Rounds halves toward positive infinity.
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

fn disk_pixels(label: &PupilLabel) -> impl Iterator<Item = (u32, u32)> {
    let (cx, cy) = label.paint_center();
    let r2 = label.radius * label.radius;
    let reach = label.radius.floor() as i64;
    let ys = (cy - reach).max(0)..=(cy + reach).min(EYE_HEIGHT as i64 - 1);
    ys.flat_map(move |y| {
        let xs = (cx - reach).max(0)..=(cx + reach).min(EYE_WIDTH as i64 - 1);
        xs.filter_map(move |x| {
            (((x - cx).pow(2) + (y - cy).pow(2)) as f64 <= r2).then_some((x as u32, y as u32))
        })
    })
}

/// Sets every pixel within `radius` of the (rounded) centre to the marker color.
pub fn paint_pupil(
    image: &EyeImage,
    label: &PupilLabel,
    color: MarkerColor,
) -> Result<EyeImage, DatasetError> {
    label.validate()?;
    let mut out = image.clone().with_provenance(Provenance::Labeled);
    let px = Rgb(color.rgb());
    for (x, y) in disk_pixels(label) {
        out.pixels_mut().put_pixel(x, y, px);
    }
    Ok(out)
}

/// Number of pixels exactly equal to the marker color.
pub fn marker_pixel_count(image: &EyeImage, color: MarkerColor) -> usize {
    let c = color.rgb();
    image.pixels().pixels().filter(|p| p.0 == c).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray() -> EyeImage {
        EyeImage::filled([120, 110, 100], Provenance::Raw)
    }

    #[test]
    fn centre_pixel_becomes_the_marker_green() {
        let out = paint_pupil(&gray(), &PupilLabel::new(200.0, 150.0, 12.0), MarkerColor::DEFAULT).unwrap();
        assert_eq!(out.pixels().get_pixel(200, 150).0, [45, 253, 9]);
        assert_eq!(out.pixels().get_pixel(200, 163).0, [120, 110, 100]);
        assert_eq!(out.pixels().get_pixel(200, 162).0, [45, 253, 9]);
        assert_eq!(out.provenance(), Provenance::Labeled);
    }

    #[test]
    fn rejects_tiny_radius_and_off_canvas_disks() {
        let img = gray();
        for bad in [
            PupilLabel::new(200.0, 150.0, 0.5),
            PupilLabel::new(-30.0, 150.0, 12.0),
            PupilLabel::new(200.0, 320.0, 12.0),
            PupilLabel::new(f64::NAN, 1.0, 5.0),
        ] {
            assert!(matches!(paint_pupil(&img, &bad, MarkerColor::DEFAULT), Err(DatasetError::InvalidLabel(_))));
        }
        // Clipped but still overlapping the canvas.
        assert!(paint_pupil(&img, &PupilLabel::new(-5.0, 150.0, 12.0), MarkerColor::DEFAULT).is_ok());
    }

    #[test]
    fn half_pixel_centres_round_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(-2.5), -2);
        assert_eq!(round_half_up(2.49), 2);
    }

    proptest! {
        #[test]
        fn painting_is_idempotent(cx in -10.0f64..410.0, cy in -10.0f64..310.0, r in 1.0f64..25.0) {
            let label = PupilLabel::new(cx, cy, r);
            prop_assume!(label.validate().is_ok());
            let once = paint_pupil(&gray(), &label, MarkerColor::DEFAULT).unwrap();
            let twice = paint_pupil(&once, &label, MarkerColor::DEFAULT).unwrap();
            prop_assert_eq!(once.pixels().as_raw(), twice.pixels().as_raw());
        }

        #[test]
        fn marker_count_equals_discrete_disk_area(cx in -10i64..410, cy in -10i64..310, r in 1u32..25) {
            let label = PupilLabel::new(cx as f64, cy as f64, r as f64);
            prop_assume!(label.validate().is_ok());
            let painted = paint_pupil(&gray(), &label, MarkerColor::DEFAULT).unwrap();
            let mut expect = 0usize;
            for y in 0..300i64 {
                for x in 0..400i64 {
                    if (x - cx).pow(2) + (y - cy).pow(2) <= (r as i64).pow(2) {
                        expect += 1;
                    }
                }
            }
            prop_assert_eq!(marker_pixel_count(&painted, MarkerColor::DEFAULT), expect);
        }
    }
}
