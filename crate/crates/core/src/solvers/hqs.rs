use crate::denoise::{DenoiseRequest, DenoiserKind};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::forward::{MeasurementSet, Ptychography};
use crate::image::{check_shape, ComplexImage, RealImage, C64};
use crate::par;

use super::{flat_init, pie, IterationRecord, Observer, Schedule, SolverConfig, SolverState};

/// Closed-form data step in the Fourier domain: keeps the phase of
/// `spectrum` and sets the amplitude to `c * y + (1 - c) * |spectrum|`.
/// Zero entries take phase 0.
pub fn hqs_data_step(spectrum: &ComplexImage, y: &RealImage, c: f64) -> Result<ComplexImage> {
    check_shape(spectrum.shape(), y.shape())?;
    let mut out = spectrum.clone();
    for (v, &a) in out.data_mut().iter_mut().zip(y.data()) {
        *v = blend(*v, a, c);
    }
    Ok(out)
}

#[inline]
pub(crate) fn blend(v: C64, y: f64, c: f64) -> C64 {
    let m = v.norm();
    let amp = c * y + (1.0 - c) * m;
    if m > 0.0 {
        v * (amp / m)
    } else {
        C64::new(amp, 0.0)
    }
}

/// Result of normalising a back-projection by the illumination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAverage {
    pub image: ComplexImage,
    /// Pixels with zero weight, which are set to 0.
    pub uncovered: usize,
}

/// `sum_l A_l^* z_l / sum_l |A_l|^2` given the numerator and the weights.
pub fn weighted_average(numerator: &ComplexImage, weights: &RealImage) -> Result<WeightedAverage> {
    numerator.ensure_same_shape(weights)?;
    let mut uncovered = 0;
    let data = numerator
        .data()
        .iter()
        .zip(weights.data())
        .map(|(z, &w)| {
            if w > 0.0 {
                z / w
            } else {
                uncovered += 1;
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(WeightedAverage {
        image: ComplexImage::new(numerator.height(), numerator.width(), data)?,
        uncovered,
    })
}

/// `sqrt(W)` with zero-weight pixels raised to the smallest positive value,
/// so the weighted prox stays well posed there.
fn prox_weight(weights: &RealImage) -> RealImage {
    let floor = weights
        .data()
        .iter()
        .copied()
        .filter(|w| *w > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    weights.map(|w| if w > 0.0 { w.sqrt() } else { floor.sqrt() })
}

pub(crate) struct Averager<'a> {
    pub op: &'a Ptychography,
    pub y: &'a [RealImage],
    pub weights: RealImage,
}

impl<'a> Averager<'a> {
    pub fn new(op: &'a Ptychography, y: &'a [RealImage]) -> Self {
        Self {
            op,
            y,
            weights: op.weight_map(),
        }
    }

    /// Per-window data step on the given spectra followed by weighted
    /// averaging.
    pub fn step(&self, spectra: &[ComplexImage], c: f64) -> Result<ComplexImage> {
        let fft = self.op.fft();
        let windows: Vec<ComplexImage> = par::map_indexed(spectra.len(), |l| {
            let mut z = hqs_data_step(&spectra[l], &self.y[l], c)?;
            fft.inverse(z.data_mut());
            Ok(z)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let numerator = self.op.back_project(&windows)?;
        Ok(weighted_average(&numerator, &self.weights)?.image)
    }
}

pub(crate) fn check_coverage(weights: &RealImage, border: Option<usize>) -> Result<()> {
    let Some(border) = border else {
        return Ok(());
    };
    let crop = weights.crop_border(border)?;
    let count = crop.data().iter().filter(|w| **w <= 0.0).count();
    if count > 0 {
        return Err(Error::UncoveredRegion { count });
    }
    Ok(())
}

/// Plug-and-play HQS for ptychography.
///
/// Each iteration computes the spectra of `x_k` once; they serve both the
/// data step and the residual of the previous iterate.
pub fn hqs_ptychography(m: &MeasurementSet, config: &SolverConfig) -> Result<SolverState> {
    hqs_ptychography_observed(m, config, &mut |_, _| Ok(()))
}

pub(crate) fn hqs_ptychography_observed(
    m: &MeasurementSet,
    config: &SolverConfig,
    observer: Observer<'_>,
) -> Result<SolverState> {
    let op = Ptychography::new(m.probe.clone(), m.geometry.clone())?;
    let avg = Averager::new(&op, &m.amplitudes);
    check_coverage(&avg.weights, config.required_border)?;

    let (h, w) = m.geometry.image_shape();
    let x0 = match config.warmstart_iterations() {
        0 => flat_init(h, w),
        n => pie::sim_pie_observed(m, &SolverConfig::simpie(n), &mut |_, _| Ok(()))?.x,
    };
    let mut spectra = op.spectra(&x0)?;
    let mut state = SolverState::start(x0, Ptychography::relative_residual(&spectra, &m.amplitudes));
    if config.iterations == 0 {
        return Ok(state);
    }

    let schedule = config.schedule_for(m.alpha)?;
    let n = op.window_pixels();
    let d = config.use_weighted_prox.then(|| prox_weight(&avg.weights));
    let covered: Vec<bool> = avg.weights.data().iter().map(|w| *w > 0.0).collect();

    for k in 0..config.iterations {
        let (tau, mu, c) = coefficients(&schedule, k, n, config.modulus_replacement);
        let z = avg.step(&spectra, c)?;
        let req = DenoiseRequest {
            strength: tau,
            weight: d.as_ref(),
        };
        let mut x = config.denoiser.denoise(&z, req)?;
        if d.is_some() {
            for (v, &cov) in x.data_mut().iter_mut().zip(&covered) {
                if !cov {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        spectra = op.spectra(&x)?;
        let residual = Ptychography::relative_residual(&spectra, &m.amplitudes);
        state.x = x;
        state.record(IterationRecord {
            k,
            tau,
            mu,
            c,
            relative_residual: residual,
        });
        observer(k, &state.x)?;
    }
    Ok(state)
}

fn coefficients(schedule: &Schedule, k: usize, n: usize, modulus_replacement: bool) -> (f64, f64, f64) {
    let tau = schedule.tau(k);
    let mu = schedule.mu(k);
    let c = if modulus_replacement { 1.0 } else { schedule.c(k, n) };
    (tau, mu, c)
}

/// Plug-and-play HQS for a single full-image Fourier magnitude
/// `y = |FFT2(x)|`.
pub fn hqs_phase_retrieval(
    y: &RealImage,
    x0: &ComplexImage,
    schedule: &Schedule,
    denoiser: &DenoiserKind,
    modulus_replacement: bool,
) -> Result<SolverState> {
    x0.ensure_same_shape(y)?;
    let (h, w) = y.shape();
    let fft = Fft2::new(h, w);
    let spectrum_of = |x: &ComplexImage| {
        let mut s = x.clone();
        fft.forward(s.data_mut());
        s
    };
    let ys = std::slice::from_ref(y);
    let mut spectrum = spectrum_of(x0);
    let mut state = SolverState::start(
        x0.clone(),
        Ptychography::relative_residual(std::slice::from_ref(&spectrum), ys),
    );
    let n = h * w;
    for k in 0..schedule.len() {
        let (tau, mu, c) = coefficients(schedule, k, n, modulus_replacement);
        let mut z = hqs_data_step(&spectrum, y, c)?;
        fft.inverse(z.data_mut());
        let x = denoiser.denoise(
            &z,
            DenoiseRequest {
                strength: tau,
                weight: None,
            },
        )?;
        spectrum = spectrum_of(&x);
        let residual = Ptychography::relative_residual(std::slice::from_ref(&spectrum), ys);
        state.x = x;
        state.record(IterationRecord {
            k,
            tau,
            mu,
            c,
            relative_residual: residual,
        });
    }
    Ok(state)
}
