use crate::error::Result;
use crate::forward::{MeasurementSet, Ptychography};
use crate::image::{check_shape, ComplexImage, RealImage};

use super::hqs::{blend, check_coverage, Averager};
use super::{flat_init, IterationRecord, Observer, SolverConfig, SolverState};

/// Replaces the amplitude of `spectrum` by `y`, keeping its phase.
pub fn modulus_projection(spectrum: &ComplexImage, y: &RealImage) -> Result<ComplexImage> {
    super::hqs_data_step(spectrum, y, 1.0)
}

fn record(k: usize, residual: f64) -> IterationRecord {
    IterationRecord {
        k,
        tau: 0.0,
        mu: 0.0,
        c: 1.0,
        relative_residual: residual,
    }
}

/// Simultaneous PIE: modulus projection of every window followed by the
/// weighted average. Starts from the flat object.
pub fn sim_pie(m: &MeasurementSet, config: &SolverConfig) -> Result<SolverState> {
    sim_pie_observed(m, config, &mut |_, _| Ok(()))
}

pub(crate) fn sim_pie_observed(m: &MeasurementSet, config: &SolverConfig, observer: Observer<'_>) -> Result<SolverState> {
    let op = Ptychography::new(m.probe.clone(), m.geometry.clone())?;
    let avg = Averager::new(&op, &m.amplitudes);
    check_coverage(&avg.weights, config.required_border)?;
    let (h, w) = m.geometry.image_shape();
    let x0 = flat_init(h, w);
    let mut spectra = op.spectra(&x0)?;
    let mut state = SolverState::start(x0, Ptychography::relative_residual(&spectra, &m.amplitudes));
    for k in 0..config.iterations {
        state.x = avg.step(&spectra, 1.0)?;
        spectra = op.spectra(&state.x)?;
        state.record(record(k, Ptychography::relative_residual(&spectra, &m.amplitudes)));
        observer(k, &state.x)?;
    }
    Ok(state)
}

/// Sequential PIE: windows are visited in scan order and each update
/// `x += beta * A_l^* (psi' - psi) / max |P|^2` is applied immediately.
pub fn seq_pie(m: &MeasurementSet, config: &SolverConfig) -> Result<SolverState> {
    seq_pie_observed(m, config, &mut |_, _| Ok(()))
}

pub(crate) fn seq_pie_observed(m: &MeasurementSet, config: &SolverConfig, observer: Observer<'_>) -> Result<SolverState> {
    let op = Ptychography::new(m.probe.clone(), m.geometry.clone())?;
    check_coverage(&op.weight_map(), config.required_border)?;
    let (h, w) = m.geometry.image_shape();
    let x0 = flat_init(h, w);
    let initial = Ptychography::relative_residual(&op.spectra(&x0)?, &m.amplitudes);
    let mut state = SolverState::start(x0, initial);
    for k in 0..config.iterations {
        seqpie_sweep(&op, &m.amplitudes, &mut state.x, config.pie_step)?;
        let residual = Ptychography::relative_residual(&op.spectra(&state.x)?, &m.amplitudes);
        state.record(record(k, residual));
        observer(k, &state.x)?;
    }
    Ok(state)
}

/// One SimPIE iteration from `x`.
pub fn simpie_update(op: &Ptychography, y: &[RealImage], x: &ComplexImage) -> Result<ComplexImage> {
    Averager::new(op, y).step(&op.spectra(x)?, 1.0)
}

/// One sequential sweep over all positions, updating `x` in place.
pub fn seqpie_sweep(op: &Ptychography, y: &[RealImage], x: &mut ComplexImage, beta: f64) -> Result<()> {
    let geometry = op.geometry();
    check_shape(geometry.image_shape(), x.shape())?;
    let n = geometry.window();
    let w = geometry.image_shape().1;
    let probe = op.probe().values().data();
    let step = beta / op.probe().max_intensity();
    for (l, &(r0, c0)) in geometry.positions().iter().enumerate() {
        let psi = op.spectrum(x, l)?;
        let mut delta = psi.clone();
        for ((d, &p), &a) in delta.data_mut().iter_mut().zip(psi.data()).zip(y[l].data()) {
            *d = blend(p, a, 1.0) - p;
        }
        op.fft().inverse(delta.data_mut());
        let xd = x.data_mut();
        for r in 0..n {
            let base = (r0 + r) * w + c0;
            for c in 0..n {
                xd[base + c] += probe[r * n + c].conj() * delta.data()[r * n + c] * step;
            }
        }
    }
    Ok(())
}
