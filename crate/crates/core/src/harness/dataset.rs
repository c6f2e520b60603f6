//! Turning RGB photographs into complex test objects.

use std::f64::consts::PI;
use std::path::Path;

use image::{DynamicImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{wrap_phase, ComplexImage, C64};

/// Central `size x size` crop.
pub fn center_crop(img: &RgbImage, size: usize) -> Result<RgbImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if size == 0 || size > w || size > h {
        return Err(Error::InvalidArgument(format!(
            "cannot crop {size}x{size} from a {h}x{w} image"
        )));
    }
    let (r0, c0) = ((h - size) / 2, (w - size) / 2);
    Ok(image::imageops::crop_imm(img, c0 as u32, r0 as u32, size as u32, size as u32).to_image())
}

/// Checks for exactly three channels and converts to 8-bit RGB.
pub fn as_rgb(img: &DynamicImage) -> Result<RgbImage> {
    let channels = img.color().channel_count();
    if channels != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected an RGB image, got {channels} channels"
        )));
    }
    Ok(img.to_rgb8())
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    as_rgb(&image::open(path)?)
}

/// Global phase shift drawn uniformly from [-pi, pi).
pub fn draw_phase_shift(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random_range(-PI..PI)
}

/// Amplitude `(R + G) / 2`, phase `wrap(2 pi B - pi + theta0)` with the
/// shift drawn from `seed`. Channels are normalised by 255.
pub fn rgb_to_complex(rgb: &RgbImage, seed: u64) -> ComplexImage {
    rgb_to_complex_shifted(rgb, draw_phase_shift(seed))
}

pub fn rgb_to_complex_shifted(rgb: &RgbImage, theta0: f64) -> ComplexImage {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ComplexImage::from_fn(h, w, |r, c| {
        let [red, green, blue] = rgb.get_pixel(c as u32, r as u32).0.map(|v| f64::from(v) / 255.0);
        pixel_to_complex(red, green, blue, theta0)
    })
}

/// One pixel with channels already in [0, 1].
pub fn pixel_to_complex(red: f64, green: f64, blue: f64, theta0: f64) -> C64 {
    let amp = (red + green) / 2.0;
    if amp == 0.0 {
        return C64::new(0.0, 0.0);
    }
    C64::from_polar(amp, wrap_phase(2.0 * PI * blue - PI + theta0))
}

/// Stable 64-bit seed from a run seed and a list of key parts.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
