use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ptycho_core::forward::{
    self, intensity_weight_map, make_circular_probe, make_scan_grid, min_weight_in_crop, overlap_fraction,
    support_iou,
};
use ptycho_core::harness::{self, ExperimentConfig};
use ptycho_core::image::ComplexImage;
use ptycho_core::{io, metrics, solvers, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "ptycho", version, about = "Ptychographic reconstruction with plug-and-play HQS")]
struct Cli {
    /// Configuration file (solver config for `reconstruct`, experiment config
    /// for `experiment`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; overrides the value in the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate noisy far-field measurements of an object.
    Simulate(SimulateArgs),
    /// Reconstruct an object from measurements.
    Reconstruct(ReconstructArgs),
    /// Score a reconstruction against the ground truth.
    Evaluate(EvaluateArgs),
    /// Run a full sweep described by `--config`.
    Experiment,
    /// Print probe and scan-geometry diagnostics.
    Probe(GeometryArgs),
}

#[derive(Args, Debug, Clone)]
struct GeometryArgs {
    /// Object side length in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Scan grid as ROWSxCOLS.
    #[arg(long, default_value = "7x7", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Window size N.
    #[arg(long, default_value_t = 84)]
    window: usize,
    /// Probe radius in pixels.
    #[arg(long, default_value_t = 40.0)]
    radius: f64,
    /// Border excluded from the metric region.
    #[arg(long, default_value_t = 20)]
    border: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// RGB image (PNG) or complex object (CIMG1).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Shot-noise level alpha (0 for noiseless data).
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Simpie,
    Seqpie,
    HqsTv,
    ErrorReduction,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Measurements in PMEAS1 format.
    #[arg(long)]
    measurements: PathBuf,
    /// Built-in solver configuration, used when `--config` is absent.
    #[arg(long, value_enum, default_value = "hqs-tv")]
    preset: Preset,
    /// Overrides the iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Also write every k-th iterate.
    #[arg(long)]
    save_every: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Reconstruction (CIMG1).
    #[arg(long)]
    reco: PathBuf,
    /// Ground truth (CIMG1).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 20)]
    border: usize,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

fn out_dir(cli: &Cli, default: &str) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load_object(path: &Path, crop: usize, seed: u64) -> Result<ComplexImage> {
    let is_cimg = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("cimg"));
    if is_cimg {
        return Ok(io::load_complex(path)?);
    }
    let rgb = harness::center_crop(&harness::load_rgb(path)?, crop)?;
    Ok(harness::rgb_to_complex(&rgb, seed))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let g = &args.geometry;
    let object = load_object(&args.input, g.size, seed)?;
    let (h, w) = object.shape();
    let probe = make_circular_probe(g.window, g.radius)?;
    let geometry = make_scan_grid(h, w, g.grid.0, g.grid.1, g.window)?;
    let clean = forward::forward(&object, &probe, &geometry)?;
    let noisy = forward::add_shot_noise(&clean, args.alpha, seed)?;
    let dir = out_dir(cli, "simulated")?;
    io::save_measurements(dir.join("measurements.pmeas"), &noisy)?;
    io::save_complex(dir.join("object.cimg"), &object)?;
    println!(
        "wrote {} windows of {}x{} (alpha {}) to {}",
        geometry.len(),
        g.window,
        g.window,
        args.alpha,
        dir.display()
    );
    Ok(())
}

fn solver_config(cli: &Cli, args: &ReconstructArgs) -> Result<SolverConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => match args.preset {
            Preset::Simpie => SolverConfig::simpie(2000),
            Preset::Seqpie => SolverConfig::seqpie(2000),
            Preset::HqsTv => SolverConfig::hqs_tv(600),
            Preset::ErrorReduction => SolverConfig {
                algorithm: solvers::Algorithm::ErrorReduction,
                ..SolverConfig::simpie(2000)
            },
        },
    };
    if let Some(k) = args.iterations {
        cfg.iterations = k;
    }
    Ok(cfg)
}

fn reconstruct(cli: &Cli, args: &ReconstructArgs) -> Result<()> {
    let m = io::load_measurements(&args.measurements)?;
    let cfg = solver_config(cli, args)?;
    let dir = out_dir(cli, "reconstruction")?;
    let every = args.save_every.filter(|k| *k > 0);
    let mut observer = |k: usize, x: &ComplexImage| -> ptycho_core::Result<()> {
        if let Some(every) = every {
            if (k + 1) % every == 0 {
                io::save_complex(dir.join(format!("iterate_{:05}.cimg", k + 1)), x)?;
            }
        }
        Ok(())
    };
    let state = solvers::reconstruct_observed(&m, &cfg, &mut observer)?;
    io::save_complex(dir.join("reconstruction.cimg"), &state.x)?;
    let mut csv = Vec::new();
    state.write_log_csv(&mut csv)?;
    fs::write(dir.join("residuals.csv"), csv)?;
    println!(
        "{} iterations, relative residual {:.6e}, written to {}",
        state.k,
        state.final_residual(),
        dir.display()
    );
    Ok(())
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let reco = io::load_complex(&args.reco)?;
    let gt = io::load_complex(&args.gt)?;
    let report = metrics::evaluate(&reco, &gt, args.border)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.json"), json + "\n")?;
    }
    Ok(())
}

fn experiment(cli: &Cli) -> Result<()> {
    let Some(path) = &cli.config else {
        bail!("`experiment` needs --config <file>");
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = match (&cli.out, &cfg.output) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => PathBuf::from("experiment"),
    };
    let report = harness::run_experiment(&cfg, Some(&dir))?;
    print!("{}", harness::summary_to_text(&report.summary));
    let failed = report.rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} tuples failed; see results.csv", report.rows.len());
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn probe(cli: &Cli, g: &GeometryArgs) -> Result<()> {
    let probe = make_circular_probe(g.window, g.radius)?;
    let geometry = make_scan_grid(g.size, g.size, g.grid.0, g.grid.1, g.window)?;
    let weights = intensity_weight_map(&probe, &geometry)?;
    let stride = geometry.positions().get(1).map(|p| p.1).unwrap_or(0);
    let report = serde_json::json!({
        "image_size": g.size,
        "grid": format!("{}x{}", g.grid.0, g.grid.1),
        "window": g.window,
        "radius": g.radius,
        "probe_support": probe.support_size(),
        "positions": geometry.positions(),
        "stride": stride,
        "overlap_fraction": overlap_fraction(&probe, &geometry)?,
        "support_iou": support_iou(&probe, stride),
        "min_weight_in_crop": min_weight_in_crop(&weights, g.border)?,
        "border": g.border,
    });
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("probe.json"), json + "\n")?;
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    if threads.is_some_and(|n| n > 1) {
        eprintln!("built without the `parallel` feature; running on one thread");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Simulate(args) => simulate(&cli, args),
        Command::Reconstruct(args) => reconstruct(&cli, args),
        Command::Evaluate(args) => evaluate(&cli, args),
        Command::Experiment => experiment(&cli),
        Command::Probe(args) => probe(&cli, args),
    }
}
