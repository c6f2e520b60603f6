//! Reconstruction algorithms.
//!
//! * [`hqs_ptychography`]: plug-and-play half-quadratic splitting with a
//!   closed-form per-window data step and a (weighted) denoising step.
//! * [`hqs_phase_retrieval`]: the same splitting for a single full-image
//!   Fourier magnitude.
//! * [`sim_pie`] and [`seq_pie`]: the classical simultaneous and sequential
//!   PIE baselines.

mod hqs;
mod pie;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use hqs::{hqs_data_step, hqs_phase_retrieval, hqs_ptychography, weighted_average, WeightedAverage};
pub use pie::{modulus_projection, seq_pie, seqpie_sweep, sim_pie, simpie_update};

use crate::denoise::{DenoiserKind, TvParams};
use crate::error::{Error, Result};
use crate::forward::MeasurementSet;
use crate::image::{ComplexImage, C64};

/// Amplitude of the flat initial object.
pub const FLAT_INIT_AMPLITUDE: f64 = 0.5;

/// Denoising strengths `tau_k`, log-spaced from `tau_start` to `tau_end`, and
/// the penalty weights `mu_k = lambda / tau_k^2` with
/// `lambda = lambda_tilde * sigma_hat^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub lambda_tilde: f64,
    pub sigma_hat: f64,
    taus: Vec<f64>,
}

pub fn make_schedule(
    tau_start: f64,
    tau_end: f64,
    iterations: usize,
    lambda_tilde: f64,
    sigma_hat: f64,
) -> Result<Schedule> {
    if !(tau_end > 0.0) || !(tau_start >= tau_end) || !tau_start.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "schedule needs tau_start >= tau_end > 0 (got {tau_start} -> {tau_end})"
        )));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one iteration".into()));
    }
    if !(lambda_tilde > 0.0) || !(sigma_hat > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_tilde and sigma_hat must be positive (got {lambda_tilde}, {sigma_hat})"
        )));
    }
    let taus = if iterations == 1 {
        vec![tau_start]
    } else {
        let ratio = tau_end / tau_start;
        (0..iterations)
            .map(|k| tau_start * ratio.powf(k as f64 / (iterations - 1) as f64))
            .collect()
    };
    Ok(Schedule {
        tau_start,
        tau_end,
        lambda_tilde,
        sigma_hat,
        taus,
    })
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_tilde * self.sigma_hat * self.sigma_hat
    }

    /// `tau_k` for the zero-based iteration `k`.
    pub fn tau(&self, k: usize) -> f64 {
        self.taus[k]
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn mu(&self, k: usize) -> f64 {
        self.lambda() / self.taus[k].powi(2)
    }

    /// Data-step blend `c_k = n / (n + mu_k)` for a subproblem of `n` pixels.
    pub fn c(&self, k: usize, n: usize) -> f64 {
        let n = n as f64;
        n / (n + self.mu(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Hqs,
    Simpie,
    Seqpie,
    /// Modulus projection followed by projection onto the nonnegative reals.
    ErrorReduction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Constant amplitude [`FLAT_INIT_AMPLITUDE`], zero phase.
    Flat,
    /// Flat start followed by this many SimPIE iterations.
    SimpieWarmstart { iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tau_start: f64,
    pub tau_end: f64,
    pub lambda_tilde: f64,
    /// Noise-level estimate; `None` uses the measurement's alpha (or 1 for
    /// noiseless data).
    pub sigma_hat: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            tau_start: 30.0,
            tau_end: 6.0,
            lambda_tilde: DEFAULT_LAMBDA_TILDE,
            sigma_hat: None,
        }
    }
}

/// Regularisation strength used for the HQS presets, tuned on a held-out
/// image at 7x7 and alpha = 20 together with the default TV scale.
pub const DEFAULT_LAMBDA_TILDE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Main iterations `K` (not counting any warm start).
    pub iterations: usize,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserKind,
    pub init: Init,
    /// PIE step size `beta` in (0, 2].
    pub pie_step: f64,
    /// Solve the spatially weighted prox rather than the plain one.
    pub use_weighted_prox: bool,
    /// Force `c_k = 1` (full modulus replacement).
    pub modulus_replacement: bool,
    /// If set, fail when pixels inside this border-cropped region receive
    /// no illumination.
    pub required_border: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::simpie(100)
    }
}

impl SolverConfig {
    pub fn simpie(iterations: usize) -> Self {
        Self {
            algorithm: Algorithm::Simpie,
            iterations,
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserKind::Identity,
            init: Init::Flat,
            pie_step: 1.0,
            use_weighted_prox: false,
            modulus_replacement: true,
            required_border: None,
        }
    }

    pub fn seqpie(iterations: usize) -> Self {
        Self {
            algorithm: Algorithm::Seqpie,
            ..Self::simpie(iterations)
        }
    }

    /// PnP-HQS with TV, a 100-iteration SimPIE warm start and the weighted
    /// prox.
    pub fn hqs_tv(iterations: usize) -> Self {
        Self {
            algorithm: Algorithm::Hqs,
            iterations,
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserKind::Tv(TvParams::default()),
            init: Init::SimpieWarmstart { iterations: 100 },
            pie_step: 1.0,
            use_weighted_prox: true,
            modulus_replacement: false,
            required_border: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pie_step > 0.0 && self.pie_step <= 2.0) {
            return Err(Error::Config(format!(
                "pie_step must lie in (0, 2], got {}",
                self.pie_step
            )));
        }
        self.denoiser.validate()
    }

    pub fn schedule_for(&self, alpha: f64) -> Result<Schedule> {
        let sigma = self
            .schedule
            .sigma_hat
            .unwrap_or(if alpha > 0.0 { alpha } else { 1.0 });
        make_schedule(
            self.schedule.tau_start,
            self.schedule.tau_end,
            self.iterations.max(1),
            self.schedule.lambda_tilde,
            sigma,
        )
    }

    pub fn warmstart_iterations(&self) -> usize {
        match self.init {
            Init::Flat => 0,
            Init::SimpieWarmstart { iterations } => iterations,
        }
    }
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub tau: f64,
    pub mu: f64,
    pub c: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: ComplexImage,
    pub k: usize,
    /// `||y - G(x_k)|| / ||y||` after each iteration.
    pub residual_history: Vec<f64>,
    pub log: Vec<IterationRecord>,
    /// Residual of the starting point.
    pub initial_residual: f64,
}

impl SolverState {
    pub(crate) fn start(x: ComplexImage, initial_residual: f64) -> Self {
        Self {
            x,
            k: 0,
            residual_history: Vec::new(),
            log: Vec::new(),
            initial_residual,
        }
    }

    pub(crate) fn record(&mut self, record: IterationRecord) {
        self.k += 1;
        self.residual_history.push(record.relative_residual);
        self.log.push(record);
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history
            .last()
            .copied()
            .unwrap_or(self.initial_residual)
    }

    /// Writes the iteration log as CSV.
    pub fn write_log_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,tau_k,mu_k,c_k,relative_residual")?;
        for r in &self.log {
            writeln!(
                w,
                "{},{:.9e},{:.9e},{:.12},{:.12e}",
                r.k, r.tau, r.mu, r.c, r.relative_residual
            )?;
        }
        Ok(())
    }
}

pub fn flat_init(height: usize, width: usize) -> ComplexImage {
    ComplexImage::filled(height, width, C64::new(FLAT_INIT_AMPLITUDE, 0.0))
}

/// Callback receiving the zero-based iteration index and the new iterate.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &ComplexImage) -> Result<()>;

/// Runs the configured algorithm, including any warm start.
pub fn reconstruct(measurements: &MeasurementSet, config: &SolverConfig) -> Result<SolverState> {
    reconstruct_observed(measurements, config, &mut |_, _| Ok(()))
}

/// [`reconstruct`] with a callback after every main iteration.
pub fn reconstruct_observed(
    measurements: &MeasurementSet,
    config: &SolverConfig,
    observer: Observer<'_>,
) -> Result<SolverState> {
    config.validate()?;
    match config.algorithm {
        Algorithm::Hqs => hqs::hqs_ptychography_observed(measurements, config, observer),
        Algorithm::Simpie => pie::sim_pie_observed(measurements, config, observer),
        Algorithm::Seqpie => pie::seq_pie_observed(measurements, config, observer),
        Algorithm::ErrorReduction => {
            let er = SolverConfig {
                algorithm: Algorithm::Hqs,
                denoiser: DenoiserKind::NonnegProjection,
                modulus_replacement: true,
                use_weighted_prox: false,
                ..config.clone()
            };
            hqs::hqs_ptychography_observed(measurements, &er, observer)
        }
    }
}
