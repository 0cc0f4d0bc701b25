//! Raster types shared by every stage of the pipeline.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of every eye image fed to the translation model.
pub const EYE_WIDTH: u32 = 400;
/// Height of every eye image fed to the translation model.
pub const EYE_HEIGHT: u32 = 300;

/// A camera frame. Pixels are RGB regardless of how they were captured.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub pixels: RgbImage,
    pub source_id: String,
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn new(pixels: RgbImage, source_id: impl Into<String>, timestamp_ms: u64) -> Self {
        assert!(pixels.width() >= 1 && pixels.height() >= 1, "frame must be non-empty");
        Self {
            pixels,
            source_id: source_id.into(),
            timestamp_ms,
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Labeled,
    Translated,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("eye image must be {EYE_WIDTH}x{EYE_HEIGHT}, got {width}x{height}")]
pub struct WrongEyeSize {
    pub width: u32,
    pub height: u32,
}

/// A 400×300 eye crop.
#[derive(Clone, Debug, PartialEq)]
pub struct EyeImage {
    pixels: RgbImage,
    provenance: Provenance,
}

impl EyeImage {
    pub fn new(pixels: RgbImage, provenance: Provenance) -> Result<Self, WrongEyeSize> {
        if pixels.dimensions() != (EYE_WIDTH, EYE_HEIGHT) {
            return Err(WrongEyeSize {
                width: pixels.width(),
                height: pixels.height(),
            });
        }
        Ok(Self { pixels, provenance })
    }

    /// Uniformly filled image.
    pub fn filled(color: [u8; 3], provenance: Provenance) -> Self {
        Self {
            pixels: RgbImage::from_pixel(EYE_WIDTH, EYE_HEIGHT, Rgb(color)),
            provenance,
        }
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut RgbImage {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> RgbImage {
        self.pixels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("marker color ({r},{g},{b}) is not green-dominant")]
pub struct NotGreen {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

/// The color painted over pupils. Green must dominate red and blue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u8; 3]", into = "[u8; 3]")]
pub struct MarkerColor {
    r: u8,
    g: u8,
    b: u8,
}

impl MarkerColor {
    pub const DEFAULT: MarkerColor = MarkerColor {
        r: 45,
        g: 253,
        b: 9,
    };

    pub fn new(r: u8, g: u8, b: u8) -> Result<Self, NotGreen> {
        if g > r && g > b {
            Ok(Self { r, g, b })
        } else {
            Err(NotGreen { r, g, b })
        }
    }

    pub fn rgb(&self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

impl Default for MarkerColor {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<[u8; 3]> for MarkerColor {
    type Error = NotGreen;

    fn try_from(v: [u8; 3]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<MarkerColor> for [u8; 3] {
    fn from(c: MarkerColor) -> Self {
        c.rgb()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_marker_is_the_bright_green() {
        assert_eq!(MarkerColor::default().rgb(), [45, 253, 9]);
        assert!(MarkerColor::new(200, 100, 0).is_err());
        assert!(MarkerColor::new(10, 10, 0).is_err());
        let parsed: MarkerColor = serde_json::from_str("[45,253,9]").unwrap();
        assert_eq!(parsed, MarkerColor::DEFAULT);
        assert!(serde_json::from_str::<MarkerColor>("[250,20,9]").is_err());
    }

    #[test]
    fn eye_images_must_be_400_by_300() {
        assert!(EyeImage::new(RgbImage::new(400, 300), Provenance::Raw).is_ok());
        assert_eq!(
            EyeImage::new(RgbImage::new(300, 400), Provenance::Raw),
            Err(WrongEyeSize { width: 300, height: 400 })
        );
    }
}
