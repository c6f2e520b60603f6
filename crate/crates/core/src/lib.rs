//! Plug-and-play half-quadratic splitting (HQS) for ptychography and Fourier
//! phase retrieval, with the simultaneous and sequential PIE baselines, a
//! total-variation denoiser, external denoiser processes, metrics and an
//! experiment harness.
//!
//! ```no_run
//! use ptycho_core::{forward, make_circular_probe, make_scan_grid, solvers, ComplexImage, C64};
//!
//! let x = ComplexImage::filled(256, 256, C64::new(1.0, 0.0));
//! let probe = make_circular_probe(84, 40.0).unwrap();
//! let geometry = make_scan_grid(256, 256, 7, 7, 84).unwrap();
//! let clean = forward::forward(&x, &probe, &geometry).unwrap();
//! let noisy = forward::add_shot_noise(&clean, 10.0, 7).unwrap();
//! let state = solvers::reconstruct(&noisy, &solvers::SolverConfig::hqs_tv(300)).unwrap();
//! println!("residual {}", state.final_residual());
//! ```

pub mod denoise;
pub mod error;
pub mod fft;
pub mod forward;
pub mod harness;
pub mod image;
pub mod io;
pub mod metrics;
pub mod par;
pub mod solvers;

pub use error::{Error, Result};
pub use forward::{
    make_circular_probe, make_scan_grid, MeasurementSet, Probe, Ptychography, ScanGeometry,
};
pub use image::{ComplexImage, RealImage, C64};
pub use metrics::{evaluate, MetricReport, Psnr};
pub use solvers::{reconstruct, SolverConfig, SolverState};
