//! Row-major real and complex image containers.

use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// A complex-valued field: objects, exit waves and Fourier data.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<C64>,
}

/// A real-valued image: amplitudes, phases and weight maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

macro_rules! image_common {
    ($ty:ident, $elem:ty) => {
        impl $ty {
            pub fn new(height: usize, width: usize, data: Vec<$elem>) -> Result<Self> {
                if data.len() != height * width {
                    return Err(Error::InvalidArgument(format!(
                        "{} pixels supplied for a {}x{} image",
                        data.len(),
                        height,
                        width
                    )));
                }
                Ok(Self {
                    height,
                    width,
                    data,
                })
            }

            pub fn filled(height: usize, width: usize, value: $elem) -> Self {
                Self {
                    height,
                    width,
                    data: vec![value; height * width],
                }
            }

            pub fn from_fn(
                height: usize,
                width: usize,
                mut f: impl FnMut(usize, usize) -> $elem,
            ) -> Self {
                let mut data = Vec::with_capacity(height * width);
                for r in 0..height {
                    for c in 0..width {
                        data.push(f(r, c));
                    }
                }
                Self {
                    height,
                    width,
                    data,
                }
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn shape(&self) -> (usize, usize) {
                (self.height, self.width)
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            pub fn get(&self, row: usize, col: usize) -> $elem {
                self.data[row * self.width + col]
            }

            pub fn set(&mut self, row: usize, col: usize, value: $elem) {
                self.data[row * self.width + col] = value;
            }

            pub fn map(&self, mut f: impl FnMut($elem) -> $elem) -> Self {
                Self {
                    height: self.height,
                    width: self.width,
                    data: self.data.iter().map(|&v| f(v)).collect(),
                }
            }

            pub fn ensure_same_shape<O: HasShape>(&self, other: &O) -> Result<()> {
                check_shape(self.shape(), other.shape())
            }

            /// Central `(height - 2b) x (width - 2b)` sub-image.
            pub fn crop_border(&self, border: usize) -> Result<Self> {
                let (top, left, h, w) = border_window(self.shape(), border)?;
                Ok(Self::from_fn(h, w, |r, c| self.get(top + r, left + c)))
            }
        }

        impl HasShape for $ty {
            fn shape(&self) -> (usize, usize) {
                (self.height, self.width)
            }
        }
    };
}

pub trait HasShape {
    fn shape(&self) -> (usize, usize);
}

image_common!(ComplexImage, C64);
image_common!(RealImage, f64);

pub(crate) fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}

fn border_window(shape: (usize, usize), border: usize) -> Result<(usize, usize, usize, usize)> {
    let (h, w) = shape;
    if 2 * border >= h.min(w) {
        return Err(Error::BorderTooLarge {
            border,
            height: h,
            width: w,
        });
    }
    Ok((border, border, h - 2 * border, w - 2 * border))
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, C64::new(0.0, 0.0))
    }

    pub fn from_parts(re: &RealImage, im: &RealImage) -> Result<Self> {
        re.ensure_same_shape(im)?;
        let data = re
            .data
            .iter()
            .zip(&im.data)
            .map(|(&a, &b)| C64::new(a, b))
            .collect();
        Self::new(re.height, re.width, data)
    }

    pub fn from_polar(amplitude: &RealImage, phase: &RealImage) -> Result<Self> {
        amplitude.ensure_same_shape(phase)?;
        let data = amplitude
            .data
            .iter()
            .zip(&phase.data)
            .map(|(&a, &p)| C64::from_polar(a, p))
            .collect();
        Self::new(amplitude.height, amplitude.width, data)
    }

    pub fn re(&self) -> RealImage {
        self.project(|v| v.re)
    }

    pub fn im(&self) -> RealImage {
        self.project(|v| v.im)
    }

    pub fn amplitude(&self) -> RealImage {
        self.project(|v| v.norm())
    }

    /// Pointwise argument in (-pi, pi]; zero-magnitude entries get phase 0.
    pub fn phase(&self) -> RealImage {
        self.project(phase_of)
    }

    /// Amplitude and phase images. See [`ComplexImage::phase`] for the
    /// zero convention.
    pub fn decompose(&self) -> (RealImage, RealImage) {
        (self.amplitude(), self.phase())
    }

    pub fn scale(&self, factor: C64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `sum_i conj(self_i) * other_i`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    fn project(&self, f: impl Fn(&C64) -> f64) -> RealImage {
        RealImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl RealImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn to_complex(&self) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }
}

/// `arg(z)` in (-pi, pi], with `arg(0) = 0`.
pub fn phase_of(z: &C64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    // atan2 yields -pi for (negative real, -0.0 imaginary).
    if p == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        p
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
