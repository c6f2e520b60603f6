//! 8-bit grayscale PNG export of amplitude and phase maps.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use image::GrayImage;

use crate::error::Result;
use crate::image::RealImage;

/// Amplitude in [0, `peak`] mapped linearly to 0..=255, clipped outside.
pub fn amplitude_to_gray(amp: &RealImage, peak: f64) -> GrayImage {
    let peak = if peak > 0.0 { peak } else { 1.0 };
    to_gray(amp, |v| (v / peak).clamp(0.0, 1.0) * 255.0)
}

/// Phase in (-pi, pi] mapped linearly to 0..=255.
pub fn phase_to_gray(phase: &RealImage) -> GrayImage {
    to_gray(phase, |v| ((v + PI) / TAU).clamp(0.0, 1.0) * 255.0)
}

/// Inverse of [`phase_to_gray`] up to quantisation.
pub fn gray_to_phase(img: &GrayImage) -> RealImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    RealImage::from_fn(h, w, |r, c| {
        f64::from(img.get_pixel(c as u32, r as u32).0[0]) / 255.0 * TAU - PI
    })
}

fn to_gray(img: &RealImage, f: impl Fn(f64) -> f64) -> GrayImage {
    let w = img.width();
    GrayImage::from_fn(img.width() as u32, img.height() as u32, |c, r| {
        let v = img.data()[r as usize * w + c as usize];
        image::Luma([f(v).round() as u8])
    })
}

pub fn save_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wrapped_difference;

    #[test]
    fn phase_round_trip_within_one_level() {
        let phases: Vec<f64> = (0..1000).map(|i| -PI + TAU * (i as f64 + 0.5) / 1000.0).collect();
        let img = RealImage::new(10, 100, phases.clone()).unwrap();
        let back = gray_to_phase(&phase_to_gray(&img));
        for (a, b) in phases.iter().zip(back.data()) {
            assert!(wrapped_difference(*a, *b).abs() <= TAU / 255.0);
        }
    }

    #[test]
    fn phase_endpoints() {
        let img = RealImage::new(1, 2, vec![PI, -PI + 1e-12]).unwrap();
        let g = phase_to_gray(&img);
        assert_eq!(g.get_pixel(0, 0).0, [255]);
        assert_eq!(g.get_pixel(1, 0).0, [0]);
    }

    #[test]
    fn amplitude_clips() {
        let img = RealImage::new(1, 3, vec![-0.5, 0.5, 2.0]).unwrap();
        let g = amplitude_to_gray(&img, 1.0);
        assert_eq!(g.as_raw(), &vec![0, 128, 255]);
    }
}
