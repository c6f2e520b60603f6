//! Isotropic total-variation proximal operator.
//!
//! Solves `argmin_u 1/2 sum_i w_i (u_i - v_i)^2 + tau * TV(u)` with forward
//! differences and reflexive (Neumann) boundaries by projected gradient on
//! the dual variable `p`, `|p_i| <= 1`:
//!
//! ```text
//! u(p)   = v - tau * W^-1 * div*(p)        (div* = grad^T)
//! p     <- proj(p + min(W) / (8 tau) * grad u(p))
//! ```
//!
//! The step is `1/L` for the dual objective, so the dual objective
//! `1/2 tau^2 sum (div* p)_i^2 / w_i - tau <div* p, v>` never increases.
//! The unweighted prox is the case `W = 1`.

use crate::error::{Error, Result};
use crate::image::RealImage;
use crate::par;

pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-5;

/// Result of a TV prox run, with the dual objective after every iteration
/// when tracing was requested.
#[derive(Debug, Clone)]
pub struct TvOutcome {
    pub image: RealImage,
    pub iterations: usize,
    pub dual_objective: Vec<f64>,
}

/// Isotropic TV of `u` with forward differences.
pub fn tv_value(u: &RealImage) -> f64 {
    let (h, w) = u.shape();
    let d = u.data();
    let mut sum = 0.0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let gx = if c + 1 < w { d[i + 1] - d[i] } else { 0.0 };
            let gy = if r + 1 < h { d[i + w] - d[i] } else { 0.0 };
            sum += (gx * gx + gy * gy).sqrt();
        }
    }
    sum
}

/// `1/2 ||D (u - v)||^2 + tau TV(u)`; `d = None` means `D = 1`.
pub fn primal_objective(u: &RealImage, v: &RealImage, tau: f64, d: Option<&RealImage>) -> f64 {
    let fit: f64 = u
        .data()
        .iter()
        .zip(v.data())
        .enumerate()
        .map(|(i, (a, b))| {
            let w = d.map_or(1.0, |d| d.data()[i].powi(2));
            w * (a - b).powi(2)
        })
        .sum();
    0.5 * fit + tau * tv_value(u)
}

pub fn tv_prox(v: &RealImage, tau: f64, max_iter: usize, tol: f64) -> RealImage {
    solve(v, tau, None, max_iter, tol, false).image
}

/// Spatially weighted TV prox: `argmin_u 1/2 ||D (u - v)||^2 + tau TV(u)`.
pub fn tv_prox_weighted(
    v: &RealImage,
    tau: f64,
    d: &RealImage,
    max_iter: usize,
    tol: f64,
) -> Result<RealImage> {
    Ok(tv_prox_traced(v, tau, Some(d), max_iter, tol, false)?.image)
}

pub fn tv_prox_traced(
    v: &RealImage,
    tau: f64,
    d: Option<&RealImage>,
    max_iter: usize,
    tol: f64,
    trace: bool,
) -> Result<TvOutcome> {
    let weights = match d {
        Some(d) => {
            v.ensure_same_shape(d)?;
            if let Some((index, &value)) = d
                .data()
                .iter()
                .enumerate()
                .find(|(_, &x)| !(x > 0.0) || !x.is_finite())
            {
                return Err(Error::NonPositiveWeight { index, value });
            }
            Some(d.map(|x| x * x))
        }
        None => None,
    };
    Ok(solve(v, tau, weights.as_ref(), max_iter, tol, trace))
}

struct Dual {
    px: Vec<f64>,
    py: Vec<f64>,
}

fn solve(
    v: &RealImage,
    tau: f64,
    weights: Option<&RealImage>,
    max_iter: usize,
    tol: f64,
    trace: bool,
) -> TvOutcome {
    let (h, w) = v.shape();
    if tau <= 0.0 || v.is_empty() {
        return TvOutcome {
            image: v.clone(),
            iterations: 0,
            dual_objective: Vec::new(),
        };
    }
    let n = h * w;
    let wdata = weights.map(|w| w.data());
    let min_w = wdata.map_or(1.0, |w| w.iter().copied().fold(f64::INFINITY, f64::min));
    let step = min_w / (8.0 * tau);

    let mut dual = Dual {
        px: vec![0.0; n],
        py: vec![0.0; n],
    };
    let mut next = Dual {
        px: vec![0.0; n],
        py: vec![0.0; n],
    };
    let mut div = vec![0.0; n];
    let mut u = v.data().to_vec();
    let mut dual_objective = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        primal_from_dual(v.data(), wdata, tau, &dual, &mut div, &mut u, h, w);
        let (delta_sq, norm_sq) = dual_step(&u, &dual, &mut next, step, h, w);
        std::mem::swap(&mut dual, &mut next);
        if trace {
            adjoint_gradient(&dual, &mut div, h, w);
            dual_objective.push(dual_value(v.data(), wdata, tau, &div));
        }
        if delta_sq == 0.0 || delta_sq.sqrt() <= tol * norm_sq.sqrt() {
            break;
        }
    }
    primal_from_dual(v.data(), wdata, tau, &dual, &mut div, &mut u, h, w);
    TvOutcome {
        image: RealImage::new(h, w, u).expect("shape preserved"),
        iterations,
        dual_objective,
    }
}

/// `div*(p) = grad^T p` for forward differences with zero last difference.
fn adjoint_gradient(p: &Dual, out: &mut [f64], h: usize, w: usize) {
    par::for_each_row(out, w, |r, row| {
        for (c, o) in row.iter_mut().enumerate() {
            let i = r * w + c;
            let mut acc = 0.0;
            if c + 1 < w {
                acc -= p.px[i];
            }
            if c > 0 {
                acc += p.px[i - 1];
            }
            if r + 1 < h {
                acc -= p.py[i];
            }
            if r > 0 {
                acc += p.py[i - w];
            }
            *o = acc;
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn primal_from_dual(
    v: &[f64],
    weights: Option<&[f64]>,
    tau: f64,
    p: &Dual,
    div: &mut [f64],
    u: &mut [f64],
    h: usize,
    w: usize,
) {
    adjoint_gradient(p, div, h, w);
    let div = &*div;
    par::for_each_row(u, w, |r, row| {
        for (c, out) in row.iter_mut().enumerate() {
            let i = r * w + c;
            let scale = weights.map_or(1.0, |wt| 1.0 / wt[i]);
            *out = v[i] - tau * scale * div[i];
        }
    });
}

/// One projected-gradient step; returns `(||p_new - p||^2, ||p_new||^2)`.
fn dual_step(u: &[f64], p: &Dual, next: &mut Dual, step: f64, h: usize, w: usize) -> (f64, f64) {
    let Dual { px, py } = next;
    let rows = par::map_row_pairs(px, py, w, |r, nx, ny| dual_row(u, p, nx, ny, step, r, h, w));
    rows.into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
}

#[allow(clippy::too_many_arguments)]
fn dual_row(
    u: &[f64],
    p: &Dual,
    nx: &mut [f64],
    ny: &mut [f64],
    step: f64,
    r: usize,
    h: usize,
    w: usize,
) -> (f64, f64) {
    let (mut delta, mut norm) = (0.0, 0.0);
    for c in 0..w {
        let i = r * w + c;
        let gx = if c + 1 < w { u[i + 1] - u[i] } else { 0.0 };
        let gy = if r + 1 < h { u[i + w] - u[i] } else { 0.0 };
        let qx = p.px[i] + step * gx;
        let qy = p.py[i] + step * gy;
        let mag = (qx * qx + qy * qy).sqrt().max(1.0);
        let (qx, qy) = (qx / mag, qy / mag);
        delta += (qx - p.px[i]).powi(2) + (qy - p.py[i]).powi(2);
        norm += qx * qx + qy * qy;
        nx[c] = qx;
        ny[c] = qy;
    }
    (delta, norm)
}

fn dual_value(v: &[f64], weights: Option<&[f64]>, tau: f64, div: &[f64]) -> f64 {
    div.iter()
        .zip(v)
        .enumerate()
        .map(|(i, (&d, &vi))| {
            let inv = weights.map_or(1.0, |w| 1.0 / w[i]);
            0.5 * tau * tau * d * d * inv - tau * d * vi
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RealImage {
        RealImage::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Closed-form prox of `tau |u1 - u2|` for a two-pixel image.
    fn two_pixel_oracle(a: f64, b: f64, tau: f64) -> (f64, f64) {
        let d = a - b;
        if d.abs() <= 2.0 * tau {
            let m = 0.5 * (a + b);
            (m, m)
        } else {
            (a - tau * d.signum(), b + tau * d.signum())
        }
    }

    #[test]
    fn zero_strength_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random(&mut rng, 5, 7);
        assert_eq!(tv_prox(&v, 0.0, 50, 1e-5), v);
    }

    #[test]
    fn constant_image_is_fixed() {
        let v = RealImage::filled(6, 4, 0.37);
        for tau in [0.1, 1.0, 25.0] {
            assert_eq!(tv_prox(&v, tau, 50, 1e-5), v);
        }
    }

    #[test]
    fn two_pixel_closed_form() {
        for &(a, b, tau) in &[(1.0, 0.0, 0.1), (1.0, 0.0, 0.6), (-0.3, 0.9, 0.25), (2.0, 2.5, 0.1)] {
            let v = RealImage::new(1, 2, vec![a, b]).unwrap();
            let u = tv_prox(&v, tau, 5000, 1e-14);
            let (ea, eb) = two_pixel_oracle(a, b, tau);
            assert!((u.data()[0] - ea).abs() < 1e-8, "{a} {b} {tau}: {:?}", u.data());
            assert!((u.data()[1] - eb).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_weight_matches_unweighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random(&mut rng, 8, 8);
        let ones = RealImage::filled(8, 8, 1.0);
        let a = tv_prox(&v, 0.2, 50, 1e-5);
        let b = tv_prox_weighted(&v, 0.2, &ones, 50, 1e-5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_weight_rescales_strength() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random(&mut rng, 10, 9);
        let d = 1.7;
        let tol = 1e-5;
        let weighted =
            tv_prox_weighted(&v, 0.3, &RealImage::filled(10, 9, d), 20000, 1e-12).unwrap();
        let plain = tv_prox(&v, 0.3 / (d * d), 20000, 1e-12);
        for (a, b) in weighted.data().iter().zip(plain.data()) {
            assert!((a - b).abs() <= tol);
        }
    }

    #[test]
    fn huge_weight_pins_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random(&mut rng, 6, 6);
        let mut d = RealImage::filled(6, 6, 1.0);
        d.set(2, 3, 1e4);
        let u = tv_prox_weighted(&v, 0.5, &d, 500, 1e-8).unwrap();
        assert!((u.get(2, 3) - v.get(2, 3)).abs() <= 1e-5);
    }

    #[test]
    fn rejects_nonpositive_weight() {
        let v = RealImage::filled(2, 2, 1.0);
        let d = RealImage::new(2, 2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            tv_prox_weighted(&v, 0.1, &d, 10, 1e-5),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn dual_objective_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random(&mut rng, 16, 12);
        let d = RealImage::from_fn(16, 12, |_, _| rng.random_range(0.5..3.0));
        for weights in [None, Some(&d)] {
            let out = tv_prox_traced(&v, 0.4, weights, 200, 0.0, true).unwrap();
            assert_eq!(out.dual_objective.len(), 200);
            for pair in out.dual_objective.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn shift_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = random(&mut rng, 9, 9);
        let c = 3.25;
        let a = tv_prox(&v, 0.3, 50, 1e-5);
        let b = tv_prox(&v.map(|x| x + c), 0.3, 50, 1e-5);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x + c - y).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_beats_start_and_unweighted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let v = random(&mut rng, 4, 4);
            let d = RealImage::from_fn(4, 4, |_, _| rng.random_range(0.3..2.0));
            let tau = 0.2;
            let u = tv_prox_weighted(&v, tau, &d, 5000, 1e-12).unwrap();
            let long = tv_prox_weighted(&v, tau, &d, 50000, 1e-15).unwrap();
            let plain = tv_prox(&v, tau, 500, 1e-10);
            let f = |x: &RealImage| primal_objective(x, &v, tau, Some(&d));
            assert!(f(&u) <= f(&v) + 1e-12);
            assert!(f(&u) <= f(&plain) + 1e-9);
            assert!((f(&u) - f(&long)).abs() <= 1e-4 * f(&long));
        }
    }
}
