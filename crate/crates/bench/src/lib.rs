//! Fixtures shared by the benchmarks under `benches/`.

use greeneye_core::calibration::{calibration_targets, ScreenGeometry};
use greeneye_core::cyclegan::{ArchConfig, ModelBundle, TrainingConfig};
use greeneye_core::dataset::{paint_pupil, PupilLabel, SyntheticEye};
use greeneye_core::{EyeImage, MarkerColor};

/// A raw synthetic eye and the same eye with its pupil painted.
pub fn eye_pair() -> (EyeImage, EyeImage) {
    let eye = SyntheticEye::new(190.0, 140.0);
    let raw = eye.render();
    let label = PupilLabel::new(190.0, 140.0, 12.0);
    let painted = paint_pupil(&raw, &label, MarkerColor::DEFAULT).expect("label inside the frame");
    (raw, painted)
}

/// Untrained bundle with the given generator width and depth.
pub fn bundle(gen_channels: usize, res_blocks: usize) -> ModelBundle {
    let arch = ArchConfig { gen_channels, res_blocks, disc_channels: gen_channels, stem_kernel: 3, ..Default::default() };
    ModelBundle::new(TrainingConfig { arch, ..Default::default() }).expect("valid architecture")
}

/// Pupil/screen correspondences from a smooth synthetic eye, `per_target` per square.
pub fn correspondences(per_target: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let targets = calibration_targets(&ScreenGeometry::default()).expect("default geometry fits");
    let mut pupil = Vec::new();
    let mut screen = Vec::new();
    for t in &targets {
        let (u, v) = ((t.center.0 - 683.0) / 683.0, (t.center.1 - 384.0) / 384.0);
        for k in 0..per_target {
            let wobble = (k % 7) as f64 * 0.1;
            pupil.push((200.0 + 60.0 * u + 4.0 * u * u + wobble, 150.0 + 40.0 * v + 3.0 * u * v - wobble));
            screen.push(t.center);
        }
    }
    (pupil, screen)
}
