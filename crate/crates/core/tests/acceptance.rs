//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any criterion fails.
//!
//! Run with `cargo test -p ptycho-core --test acceptance`.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ptycho_core::denoise::tv::{tv_prox, tv_prox_traced, tv_prox_weighted};
use ptycho_core::fft::Fft2;
use ptycho_core::forward::{
    self, add_shot_noise, apply_a, apply_a_adjoint, embed_window, extract_window, make_circular_probe,
    make_scan_grid, overlap_fraction, perturb_intensity, window_rng, MeasurementSet, Probe, Ptychography,
    ScanGeometry,
};
use ptycho_core::harness::{self, ExperimentConfig, NamedSolver, ProbeConfig, ResultRow};
use ptycho_core::image::{ComplexImage, RealImage, C64};
use ptycho_core::metrics::{mse_phase, wrapped_difference};
use ptycho_core::solvers::{self, hqs_data_step, make_schedule, weighted_average, SolverConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_complex(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ComplexImage {
    ComplexImage::from_fn(h, w, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

// 1 --------------------------------------------------------------------------

/// Per-pixel data-step objective `(|z| - y)^2 + (mu / n) |z - xhat|^2`.
fn pixel_objective(z: C64, y: f64, xhat: C64, mu: f64, n: f64) -> f64 {
    (z.norm() - y).powi(2) + mu / n * (z - xhat).norm_sqr()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (amp_grid, phase_grid) = (2000, 720);
    let phasors: Vec<C64> = (0..phase_grid)
        .map(|j| C64::from_polar(1.0, -PI + TAU * j as f64 / phase_grid as f64))
        .collect();
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..100 {
        let y = rng.random_range(0.0..4.0);
        let xhat = C64::from_polar(rng.random_range(0.0..4.0), rng.random_range(-PI..PI));
        let n = [1.0, 64.0, 7056.0][rng.random_range(0..3)];
        let mu = n * 10f64.powf(rng.random_range(-2.0..2.0));
        let tau: f64 = rng.random_range(1.0..30.0);
        let schedule = make_schedule(tau, tau, 1, mu * tau * tau, 1.0).map_err(|e| e.to_string())?;
        let c = schedule.c(0, n as usize);
        let spectrum = ComplexImage::new(1, 1, vec![xhat]).unwrap();
        let ys = RealImage::new(1, 1, vec![y]).unwrap();
        let z = hqs_data_step(&spectrum, &ys, c).map_err(|e| e.to_string())?.get(0, 0);
        let f_step = pixel_objective(z, y, xhat, mu, n);

        let a_max = 1.2 * y.max(xhat.norm()) + 1e-3;
        let h = a_max / (amp_grid - 1) as f64;
        let mut f_grid = f64::INFINITY;
        for i in 0..amp_grid {
            let a = i as f64 * h;
            for p in &phasors {
                f_grid = f_grid.min(pixel_objective(p * a, y, xhat, mu, n));
            }
            // the optimal phase is not on the grid in general
            f_grid = f_grid.min(pixel_objective(C64::from_polar(a, xhat.arg()), y, xhat, mu, n));
        }
        worst_gap = worst_gap.max(f_step - f_grid);
        if f_step > f_grid + h {
            return Err(format!("objective {f_step:.3e} above grid minimum {f_grid:.3e} + {h:.1e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs < 10.0,
        format!("100 pixels, max(f_step - f_grid) = {worst_gap:.2e}, {secs:.2} s"),
    )
}

// 2 --------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let x = random_complex(&mut rng, 64, 64);
    let probe = make_circular_probe(32, 15.0).unwrap();
    let geometry = make_scan_grid(64, 64, 3, 3, 32).unwrap();
    let m = forward::forward(&x, &probe, &geometry).unwrap();

    let collect = |cfg: &SolverConfig| -> Result<Vec<ComplexImage>, String> {
        let mut iterates = Vec::new();
        solvers::reconstruct_observed(&m, cfg, &mut |_, x| {
            iterates.push(x.clone());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        Ok(iterates)
    };
    let hqs = SolverConfig {
        algorithm: solvers::Algorithm::Hqs,
        init: solvers::Init::Flat,
        modulus_replacement: true,
        use_weighted_prox: false,
        ..SolverConfig::simpie(25)
    };
    let a = collect(&hqs)?;
    let b = collect(&SolverConfig::simpie(25))?;
    if a.len() != 25 || b.len() != 25 {
        return Err(format!("iterate counts {} and {}", a.len(), b.len()));
    }
    let worst = a
        .iter()
        .zip(&b)
        .flat_map(|(p, q)| p.data().iter().zip(q.data()).map(|(u, v)| (u - v).norm()))
        .fold(0.0, f64::max);
    check(worst <= 1e-10, format!("25 iterations, max |x_hqs - x_simpie| = {worst:.2e}"))
}

// 3 --------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let h = rng.random_range(8..40);
        let w = rng.random_range(8..40);
        let n = rng.random_range(2..=h.min(w));
        let count = rng.random_range(1..6);
        let positions: Vec<(usize, usize)> = (0..count)
            .map(|_| (rng.random_range(0..=h - n), rng.random_range(0..=w - n)))
            .collect();
        let geometry = ScanGeometry::with_repeats(h, w, n, positions).unwrap();
        let probe = Probe::new(random_complex(&mut rng, n, n)).unwrap();
        let x = random_complex(&mut rng, h, w);
        let v = random_complex(&mut rng, n, n);
        let fft = Fft2::new(n, n);
        for l in 0..geometry.len() {
            let ex = extract_window(&x, &geometry, l).unwrap();
            let etv = embed_window(&v, &geometry, l).unwrap();
            worst = worst.max(rel(ex.inner(&v).unwrap(), x.inner(&etv).unwrap()));

            let ax = apply_a(&x, &probe, &geometry, l).unwrap();
            let atv = apply_a_adjoint(&v, &probe, &geometry, l).unwrap();
            worst = worst.max(rel(ax.inner(&v).unwrap(), x.inner(&atv).unwrap()));

            let mut spectrum = ax.clone();
            fft.forward(spectrum.data_mut());
            let lhs = spectrum.norm_sqr();
            let rhs = (n * n) as f64 * ax.norm_sqr();
            worst = worst.max((lhs - rhs).abs() / rhs.max(1e-300));
        }
    }
    check(worst <= 1e-10, format!("50 instances, max relative error {worst:.2e}"))
}

// 4 --------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let h = rng.random_range(16..48);
        let w = rng.random_range(16..48);
        let n = rng.random_range(4..=h.min(w) / 2);
        let count = rng.random_range(2..12);
        let mut positions: Vec<(usize, usize)> = (0..count)
            .map(|_| (rng.random_range(0..=h - n), rng.random_range(0..=w - n)))
            .collect();
        positions.sort_unstable();
        positions.dedup();
        let geometry = ScanGeometry::new(h, w, n, positions).unwrap();
        let probe = Probe::new(random_complex(&mut rng, n, n)).unwrap();
        let op = Ptychography::new(probe.clone(), geometry.clone()).unwrap();
        let windows: Vec<ComplexImage> = (0..geometry.len()).map(|_| random_complex(&mut rng, n, n)).collect();

        let numerator = op.back_project(&windows).unwrap();
        let avg = weighted_average(&numerator, &op.weight_map()).unwrap().image;

        // sum_l A_l^* (A_l z - z_l) computed with the per-window operators
        let mut residual = ComplexImage::zeros(h, w);
        let mut rhs = ComplexImage::zeros(h, w);
        for (l, z) in windows.iter().enumerate() {
            let mut diff = apply_a(&avg, &probe, &geometry, l).unwrap();
            for (d, zl) in diff.data_mut().iter_mut().zip(z.data()) {
                *d -= zl;
            }
            let back = apply_a_adjoint(&diff, &probe, &geometry, l).unwrap();
            let bz = apply_a_adjoint(z, &probe, &geometry, l).unwrap();
            for i in 0..h * w {
                residual.data_mut()[i] += back.data()[i];
                rhs.data_mut()[i] += bz.data()[i];
            }
        }
        worst = worst.max((residual.norm_sqr() / rhs.norm_sqr()).sqrt());
    }
    check(worst <= 1e-10, format!("20 geometries, max relative normal-equation residual {worst:.2e}"))
}

// 5 --------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    // two pixels: u = v moved towards each other by tau, or merged
    let mut two_pixel = 0.0f64;
    for _ in 0..200 {
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let tau = rng.random_range(0.01..1.5);
        let v = RealImage::new(1, 2, vec![a, b]).unwrap();
        let u = tv_prox(&v, tau, 20000, 1e-15);
        let (ea, eb) = if (a - b).abs() <= 2.0 * tau {
            ((a + b) / 2.0, (a + b) / 2.0)
        } else {
            (a - tau * (a - b).signum(), b + tau * (a - b).signum())
        };
        two_pixel = two_pixel.max((u.data()[0] - ea).abs()).max((u.data()[1] - eb).abs());
    }

    let tol = 1e-10;
    let mut reduction = 0.0f64;
    let mut monotone = true;
    for _ in 0..10 {
        let v = RealImage::from_fn(12, 10, |_, _| rng.random_range(0.0..1.0));
        let dval = rng.random_range(0.5..3.0);
        let d = RealImage::filled(12, 10, dval);
        let tau = rng.random_range(0.05..0.5);
        let weighted = tv_prox_weighted(&v, tau, &d, 20000, tol).unwrap();
        let plain = tv_prox(&v, tau / (dval * dval), 20000, tol);
        for (x, y) in weighted.data().iter().zip(plain.data()) {
            reduction = reduction.max((x - y).abs());
        }
        let dvar = RealImage::from_fn(12, 10, |_, _| rng.random_range(0.3..3.0));
        for weight in [None, Some(&dvar)] {
            let trace = tv_prox_traced(&v, tau, weight, 300, 0.0, true).unwrap();
            monotone &= trace
                .dual_objective
                .windows(2)
                .all(|p| p[1] <= p[0] + 1e-12 * p[0].abs().max(1.0));
        }
    }
    check(
        two_pixel <= 1e-8 && reduction <= 1e-6 && monotone,
        format!(
            "two-pixel error {two_pixel:.1e}, constant-D reduction {reduction:.1e}, dual objective monotone: {monotone}"
        ),
    )
}

// 6 --------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let a = RealImage::new(1, 1, vec![PI - 0.1]).unwrap();
    let b = RealImage::new(1, 1, vec![-PI + 0.1]).unwrap();
    let wrap = mse_phase(&a, &b).unwrap();
    let wrap_err = (wrap - 0.04).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let x = rng.random_range(-PI..=PI);
        let y = rng.random_range(-PI..=PI);
        let oracle = (-2..=2)
            .map(|k| (x - y + TAU * k as f64).powi(2))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((wrapped_difference(x, y).powi(2) - oracle).abs());
    }
    check(
        wrap_err <= 1e-15 && worst <= 1e-12,
        format!("wrap case MSE = {wrap} (error {wrap_err:.1e}), 1e5 pairs max deviation {worst:.1e}"),
    )
}

// 7 --------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let (alpha, samples) = (20.0, 1_000_000);
    let mut rng = window_rng(77, 0);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let eta: f64 = StandardNormal.sample(&mut rng);
        let rel = perturb_intensity(1.0, alpha, eta) - 1.0;
        sum += rel;
        sum_sq += rel * rel;
    }
    let mean = sum / samples as f64;
    let std = (sum_sq / samples as f64 - mean * mean).sqrt();

    let geometry = make_scan_grid(64, 64, 3, 3, 32).unwrap();
    let probe = make_circular_probe(32, 15.0).unwrap();
    let ones = vec![RealImage::filled(32, 32, 1.0); geometry.len()];
    let clean = MeasurementSet::new(geometry, probe, ones, 0.0, None).unwrap();
    let first = add_shot_noise(&clean, alpha, 9).unwrap();
    let again = add_shot_noise(&clean, alpha, 9).unwrap();
    let other = add_shot_noise(&clean, alpha, 10).unwrap();
    let identical = first
        .amplitudes
        .iter()
        .zip(&again.amplitudes)
        .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let differs = first.amplitudes != other.amplitudes;
    check(
        (std - alpha).abs() <= 0.1 && identical && differs,
        format!("std = {std:.4} over 1e6 samples, regeneration bit-identical: {identical}"),
    )
}

// 8, 10 ----------------------------------------------------------------------

const SWEEP_ALPHAS: [f64; 4] = [10.0, 20.0, 30.0, 40.0];

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

struct Sweep {
    rows: Vec<ResultRow>,
    seconds: f64,
}

fn sweep() -> &'static Result<Sweep, String> {
    static SWEEP: OnceLock<Result<Sweep, String>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let config = ExperimentConfig {
            images: ["astronaut", "coffee", "chelsea"]
                .iter()
                .map(|n| data_dir().join(format!("{n}.png")))
                .collect(),
            crop: 256,
            probe: ProbeConfig { n: 84, radius: 40.0 },
            grids: vec![(7, 7)],
            alphas: SWEEP_ALPHAS.to_vec(),
            seed: 2024,
            solvers: vec![
                NamedSolver { name: "simpie".into(), config: SolverConfig::simpie(2000) },
                NamedSolver { name: "seqpie".into(), config: SolverConfig::seqpie(2000) },
                NamedSolver { name: "hqs_tv".into(), config: SolverConfig::hqs_tv(600) },
            ],
            border: 20,
            output: None,
            save_images: false,
        };
        let start = Instant::now();
        let report = harness::run_experiment(&config, None).map_err(|e| e.to_string())?;
        if let Some(bad) = report.rows.iter().find(|r| !r.ok()) {
            return Err(format!("{} / {} failed: {}", bad.image, bad.solver, bad.error));
        }
        Ok(Sweep {
            rows: report.rows,
            seconds: start.elapsed().as_secs_f64(),
        })
    })
}

fn mean_psnr(rows: &[ResultRow], solver: &str, alpha: f64) -> f64 {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.solver == solver && r.alpha == alpha)
        .map(|r| r.psnr_a)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_8() -> Outcome {
    let sweep = sweep().as_ref().map_err(Clone::clone)?;
    let tv = mean_psnr(&sweep.rows, "hqs_tv", 20.0);
    let sim = mean_psnr(&sweep.rows, "simpie", 20.0);
    let own_time: f64 = sweep
        .rows
        .iter()
        .filter(|r| r.alpha == 20.0 && r.solver != "seqpie")
        .map(|r| r.wall_time)
        .sum();
    check(
        tv >= sim + 1.0 && own_time < 1800.0,
        format!(
            "mean PSNR_a at alpha=20: HQS-TV {tv:.2} dB, SimPIE {sim:.2} dB, gap {:.2} dB; {own_time:.0} s of reconstruction",
            tv - sim
        ),
    )
}

fn criterion_10() -> Outcome {
    let sweep = sweep().as_ref().map_err(Clone::clone)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for solver in ["simpie", "seqpie", "hqs_tv"] {
        let means: Vec<f64> = SWEEP_ALPHAS.iter().map(|&a| mean_psnr(&sweep.rows, solver, a)).collect();
        ok &= means.windows(2).all(|p| p[1] <= p[0]);
        let text: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
        lines.push(format!("{solver} [{}]", text.join(", ")));
    }
    check(
        ok,
        format!("mean PSNR_a over alpha 10..40: {}; sweep {:.0} s", lines.join("; "), sweep.seconds),
    )
}

// 9 --------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let probe = make_circular_probe(84, 40.0).unwrap();
    let f7 = overlap_fraction(&probe, &make_scan_grid(256, 256, 7, 7, 84).unwrap()).unwrap();
    let f15 = overlap_fraction(&probe, &make_scan_grid(256, 256, 15, 15, 84).unwrap()).unwrap();
    check(
        (f7 - 0.38).abs() <= 0.02 && (f15 - 0.68).abs() <= 0.02,
        format!("7x7 overlap {f7:.4}, 15x15 overlap {f15:.4}"),
    )
}

// 11 -------------------------------------------------------------------------

fn csv_without_wall_time(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config_path = dir.path().join("experiment.toml");
    let text = format!(
        r#"
images = ["{a}", "{b}"]
crop = 96
border = 8
seed = 5
grids = [[4, 4], [5, 5]]
alphas = [0.0, 15.0]

[probe]
n = 40
radius = 18.0

[[solvers]]
name = "simpie"
config = {{ algorithm = "simpie", iterations = 15 }}

[[solvers]]
name = "seqpie"
config = {{ algorithm = "seqpie", iterations = 5 }}

[[solvers]]
name = "hqs_tv"
[solvers.config]
algorithm = "hqs"
iterations = 10
use_weighted_prox = true
modulus_replacement = false
init = {{ kind = "simpie_warmstart", iterations = 5 }}
denoiser = {{ kind = "tv" }}
"#,
        a = data_dir().join("coffee.png").display(),
        b = data_dir().join("chelsea.png").display(),
    );
    std::fs::write(&config_path, text).map_err(|e| e.to_string())?;
    let config = ExperimentConfig::load(&config_path).map_err(|e| e.to_string())?;

    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut counts = vec![1, 2, 4, max];
    counts.sort_unstable();
    counts.dedup();
    let mut outputs = Vec::new();
    for &threads in &counts {
        let out = dir.path().join(format!("run-{threads}"));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| harness::run_experiment(&config, Some(&out)))
            .map_err(|e| e.to_string())?;
        let csv = std::fs::read_to_string(out.join("results.csv")).map_err(|e| e.to_string())?;
        outputs.push(csv_without_wall_time(&csv));
    }
    let rows = outputs[0].lines().count() - 1;
    let same = outputs.iter().all(|o| *o == outputs[0]);
    check(same && rows == 24, format!("{rows} rows identical under threads {counts:?}: {same}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("closed-form data step vs grid search", criterion_1),
        ("HQS(identity, c=1) equals SimPIE", criterion_2),
        ("adjoint and Parseval identities", criterion_3),
        ("weighted-average normal equations", criterion_4),
        ("TV prox oracles", criterion_5),
        ("wrapped phase metric", criterion_6),
        ("shot-noise statistics and regeneration", criterion_7),
        ("HQS-TV beats SimPIE by 1 dB at 7x7, alpha=20", criterion_8),
        ("overlap fractions", criterion_9),
        ("PSNR non-increasing in alpha", criterion_10),
        ("thread-count invariant experiment CSV", criterion_11),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
