use image::{Rgb, RgbImage};

use super::{DatasetError, RegionBox};
use crate::types::{EyeImage, Frame, Provenance, EYE_HEIGHT, EYE_WIDTH};

/// Crops `region` out of the frame and resamples it to 400×300.
pub fn crop_resize(frame: &Frame, region: RegionBox) -> Result<EyeImage, DatasetError> {
    if region.is_degenerate() {
        return Err(DatasetError::DegenerateRegion((region.x0, region.y0, region.x1, region.y1)));
    }
    if !region.within(frame.width(), frame.height()) {
        return Err(DatasetError::DegenerateRegion((region.x0, region.y0, region.x1, region.y1)));
    }
    let pixels = bilinear(&frame.pixels, region, EYE_WIDTH, EYE_HEIGHT);
    Ok(EyeImage::new(pixels, Provenance::Raw).expect("resampled to eye size"))
}

/// Resamples a whole image to 400×300.
pub fn resize_to_eye(image: &RgbImage) -> EyeImage {
    let full = RegionBox::new(0, 0, image.width() as i64, image.height() as i64);
    EyeImage::new(bilinear(image, full, EYE_WIDTH, EYE_HEIGHT), Provenance::Raw)
        .expect("resampled to eye size")
}

/// Pixel-centre aligned bilinear resampling: output sample `i` reads the
/// source at `(i + 0.5) * scale - 0.5`, clamped to the region.
fn bilinear(src: &RgbImage, region: RegionBox, out_w: u32, out_h: u32) -> RgbImage {
    let (rw, rh) = (region.width() as usize, region.height() as usize);
    let taps = |out: u32, span: usize| -> Vec<(usize, usize, f32)> {
        let scale = span as f32 / out as f32;
        (0..out)
            .map(|i| {
                let s = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (span - 1) as f32);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(span - 1);
                (lo, hi, s - lo as f32)
            })
            .collect()
    };
    let xs = taps(out_w, rw);
    let ys = taps(out_h, rh);
    let (ox, oy) = (region.x0 as u32, region.y0 as u32);
    let mut out = RgbImage::new(out_w, out_h);
    for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let p = |xx: usize, yy: usize| src.get_pixel(ox + xx as u32, oy + yy as u32).0;
            let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let top = a[ch] as f32 * (1.0 - fx) + b[ch] as f32 * fx;
                let bottom = c[ch] as f32 * (1.0 - fx) + d[ch] as f32 * fx;
                px[ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    out
}
