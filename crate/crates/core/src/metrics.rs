//! Reconstruction quality: global-phase alignment and amplitude/phase PSNR.
//!
//! The phase error is measured on the circle: each pixel difference is
//! wrapped into [-pi, pi) before squaring, and the phase PSNR uses the full
//! range `(2 pi)^2` as its peak. Amplitude PSNR uses the ground-truth maximum
//! as its peak. Both saturate when the MSE falls below [`MSE_FLOOR`].

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{check_shape, phase_of, ComplexImage, RealImage, C64};

/// MSE values below this are reported as saturated.
pub const MSE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Psnr {
    pub db: f64,
    pub saturated: bool,
}

impl Psnr {
    fn from_mse(peak_sq: f64, mse: f64) -> Self {
        if mse < MSE_FLOOR {
            Self {
                db: 10.0 * (peak_sq / MSE_FLOOR).log10(),
                saturated: true,
            }
        } else {
            Self {
                db: 10.0 * (peak_sq / mse).log10(),
                saturated: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr_amplitude: Psnr,
    pub psnr_phase: Psnr,
    pub border_excluded: usize,
}

/// Rotates `reco` by the global phase that best matches `gt` in least squares.
pub fn global_phase_align(reco: &ComplexImage, gt: &ComplexImage) -> Result<ComplexImage> {
    let theta = optimal_global_phase(reco, gt)?;
    Ok(reco.scale(C64::from_polar(1.0, theta)))
}

/// `arg(sum_i gt_i * conj(reco_i))`, or 0 when the correlation vanishes.
pub fn optimal_global_phase(reco: &ComplexImage, gt: &ComplexImage) -> Result<f64> {
    // inner(reco, gt) = sum conj(reco) * gt
    let corr = reco.inner(gt)?;
    Ok(phase_of(&corr))
}

/// Wrapped phase difference in [-pi, pi).
pub fn wrapped_difference(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(TAU) - PI
}

pub fn mse_phase(phi_reco: &RealImage, phi_gt: &RealImage) -> Result<f64> {
    check_shape(phi_gt.shape(), phi_reco.shape())?;
    let n = phi_gt.len() as f64;
    let sum: f64 = phi_reco
        .data()
        .iter()
        .zip(phi_gt.data())
        .map(|(&a, &b)| wrapped_difference(a, b).powi(2))
        .sum();
    Ok(sum / n)
}

pub fn psnr_phase(phi_reco: &RealImage, phi_gt: &RealImage) -> Result<Psnr> {
    let mse = mse_phase(phi_reco, phi_gt)?;
    Ok(Psnr::from_mse(TAU * TAU, mse))
}

pub fn mse(a: &RealImage, b: &RealImage) -> Result<f64> {
    check_shape(b.shape(), a.shape())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok(sum / a.len() as f64)
}

pub fn psnr_amplitude(a_reco: &RealImage, a_gt: &RealImage) -> Result<Psnr> {
    check_shape(a_gt.shape(), a_reco.shape())?;
    let peak = a_gt.max();
    if !(peak > 0.0) {
        return Err(Error::ZeroGroundTruth);
    }
    let mse = mse(a_reco, a_gt)?;
    Ok(Psnr::from_mse(peak * peak, mse))
}

/// Full evaluation: crop the border, align the global phase on the cropped
/// region, then score amplitude and phase.
pub fn evaluate(reco: &ComplexImage, gt: &ComplexImage, border: usize) -> Result<MetricReport> {
    check_shape(gt.shape(), reco.shape())?;
    let reco = reco.crop_border(border)?;
    let gt = gt.crop_border(border)?;
    let aligned = global_phase_align(&reco, &gt)?;
    let (a_reco, phi_reco) = aligned.decompose();
    let (a_gt, phi_gt) = gt.decompose();
    Ok(MetricReport {
        psnr_amplitude: psnr_amplitude(&a_reco, &a_gt)?,
        psnr_phase: psnr_phase(&phi_reco, &phi_gt)?,
        border_excluded: border,
    })
}
