//! Unnormalized 2D DFT over row-major complex buffers.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::image::C64;

/// Planned forward and inverse 2D transforms for one `height x width` shape.
///
/// The forward transform is unnormalized; the inverse divides by
/// `height * width`, so `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &*self.row_fwd, &*self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &*self.row_inv, &*self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [C64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(data.len(), h * w, "buffer does not match planned shape");
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        let mut scratch = vec![C64::new(0.0, 0.0); scratch_len];
        rows.process_with_scratch(data, &mut scratch);

        let mut column = vec![C64::new(0.0, 0.0); h * w];
        transpose(data, &mut column, h, w);
        cols.process_with_scratch(&mut column, &mut scratch);
        transpose(&column, data, w, h);
    }
}

fn transpose(src: &[C64], dst: &mut [C64], h: usize, w: usize) {
    for r in 0..h {
        for c in 0..w {
            dst[c * h + r] = src[r * w + c];
        }
    }
}
