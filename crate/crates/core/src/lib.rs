//! Webcam eye tracking by color-marker image translation.
//!
//! Eye crops are translated by a cycle-consistent GAN into images where the
//! pupil is painted bright green; the pupil is then found by color
//! thresholding and mapped to the screen through a calibrated polynomial.

pub mod calibration;
pub mod cyclegan;
pub mod dataset;
pub mod nn;
pub mod pupil;
pub mod tracker;
pub mod types;

pub use types::{EyeImage, Frame, MarkerColor, Provenance, EYE_HEIGHT, EYE_WIDTH};
