//! Configuration-driven experiments: dataset preparation, sweeps over scan
//! grids, noise levels and solvers, metric tables and image export.
//!
//! Output layout under the run directory:
//!
//! ```text
//! results.csv            one row per (image, grid, alpha, solver)
//! summary.csv            mean/std per (solver, grid, alpha)
//! summary.txt            the same as an aligned table
//! manifest.json          seeds, phase shifts and geometry
//! ground_truth/          <image>.cimg, <image>_amplitude.png, <image>_phase.png
//! reconstructions/       <image>_<solver>_<grid>_a<alpha>.cimg and PNGs
//! ```

pub mod dataset;
pub mod export;
pub mod summary;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use dataset::{center_crop, derive_seed, load_rgb, rgb_to_complex, rgb_to_complex_shifted};
pub use summary::{rows_to_csv, summarize, summary_to_csv, summary_to_text, ResultRow, SummaryRow};

use crate::error::{Error, Result};
use crate::forward::{self, make_circular_probe, make_scan_grid, overlap_fraction, MeasurementSet};
use crate::image::{ComplexImage, C64};
use crate::metrics::{self, optimal_global_phase};
use crate::par;
use crate::solvers::{self, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Window size `N`.
    pub n: usize,
    /// Radius of the binary circular probe in pixels.
    pub radius: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n: 84, radius: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSolver {
    pub name: String,
    #[serde(default)]
    pub config: SolverConfig,
}

/// Experiment description, normally read from a TOML file:
///
/// ```toml
/// images = ["data/astronaut.png", "data/coffee.png"]
/// crop = 256
/// border = 20
/// seed = 1
/// grids = [[7, 7], [15, 15]]
/// alphas = [10.0, 20.0]
///
/// [probe]
/// n = 84
/// radius = 40.0
///
/// [[solvers]]
/// name = "simpie"
/// config = { algorithm = "simpie", iterations = 2000 }
///
/// [[solvers]]
/// name = "hqs_tv"
/// [solvers.config]
/// algorithm = "hqs"
/// iterations = 600
/// use_weighted_prox = true
/// modulus_replacement = false
/// init = { kind = "simpie_warmstart", iterations = 100 }
/// denoiser = { kind = "tv" }
/// schedule = { tau_start = 30.0, tau_end = 6.0 }
/// ```
///
/// Relative paths are resolved against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub images: Vec<PathBuf>,
    #[serde(default = "default_crop")]
    pub crop: usize,
    #[serde(default)]
    pub probe: ProbeConfig,
    pub grids: Vec<(usize, usize)>,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub solvers: Vec<NamedSolver>,
    /// Pixels excluded from every side before computing metrics.
    #[serde(default = "default_border")]
    pub border: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Write per-tuple CIMG1 and PNG files.
    #[serde(default = "default_true")]
    pub save_images: bool,
}

fn default_crop() -> usize {
    256
}

fn default_border() -> usize {
    20
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for img in &mut cfg.images {
            if img.is_relative() {
                *img = base.join(&*img);
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.images.is_empty() {
            return fail("at least one image is required".into());
        }
        if self.grids.is_empty() {
            return fail("at least one scan grid is required".into());
        }
        if self.alphas.is_empty() {
            return fail("at least one noise level is required".into());
        }
        if self.solvers.is_empty() {
            return fail("at least one solver is required".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return fail(format!("noise levels must be finite and >= 0, got {a}"));
        }
        if let Some(g) = self.grids.iter().find(|g| g.0 == 0 || g.1 == 0) {
            return fail(format!("grid {}x{} is empty", g.0, g.1));
        }
        if self.probe.n == 0 || self.probe.n > self.crop {
            return fail(format!(
                "probe window {} does not fit the {}px crop",
                self.probe.n, self.crop
            ));
        }
        if 2 * self.border >= self.crop {
            return fail(format!("border {} leaves nothing of the {}px crop", self.border, self.crop));
        }
        let ids = self.image_ids()?;
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return fail(format!("duplicate image id {id:?}"));
            }
        }
        for (i, s) in self.solvers.iter().enumerate() {
            let valid = !s.name.is_empty()
                && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid {
                return fail(format!("solver name {:?} must be [A-Za-z0-9_-]+", s.name));
            }
            if self.solvers[..i].iter().any(|o| o.name == s.name) {
                return fail(format!("duplicate solver name {:?}", s.name));
            }
            s.config.validate()?;
        }
        Ok(())
    }

    /// Image identifiers (file stems).
    pub fn image_ids(&self) -> Result<Vec<String>> {
        self.images
            .iter()
            .map(|p| {
                p.file_stem()
                    .and_then(|s| s.to_str())
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Config(format!("cannot derive an id from {}", p.display())))
            })
            .collect()
    }
}

/// Prepared ground-truth object.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub id: String,
    pub source: PathBuf,
    pub theta0: f64,
    pub object: ComplexImage,
}

pub fn phase_shift_seed(seed: u64, id: &str) -> u64 {
    derive_seed(seed, &[b"phase", id.as_bytes()])
}

/// Measurement seed of one (image, grid, alpha); independent of the solver
/// list.
pub fn tuple_seed(seed: u64, id: &str, grid: (usize, usize), alpha: f64) -> u64 {
    derive_seed(
        seed,
        &[
            b"noise",
            id.as_bytes(),
            &(grid.0 as u64).to_le_bytes(),
            &(grid.1 as u64).to_le_bytes(),
            &alpha.to_bits().to_le_bytes(),
        ],
    )
}

pub fn prepare_images(config: &ExperimentConfig) -> Result<Vec<PreparedImage>> {
    let ids = config.image_ids()?;
    config
        .images
        .iter()
        .zip(ids)
        .map(|(path, id)| {
            let rgb = center_crop(&load_rgb(path)?, config.crop)?;
            let seed = phase_shift_seed(config.seed, &id);
            let theta0 = dataset::draw_phase_shift(seed);
            Ok(PreparedImage {
                object: rgb_to_complex_shifted(&rgb, theta0),
                id,
                source: path.clone(),
                theta0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestImage {
    pub id: String,
    pub source: String,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestTuple {
    pub image: String,
    pub grid: String,
    pub alpha: f64,
    pub seed: u64,
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub crop: usize,
    pub border: usize,
    pub probe: ProbeConfig,
    pub parallel: bool,
    pub images: Vec<ManifestImage>,
    pub measurements: Vec<ManifestTuple>,
    pub solvers: Vec<NamedSolver>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub manifest: Manifest,
}

struct Simulated {
    image: usize,
    grid: (usize, usize),
    alpha: f64,
    seed: u64,
    overlap: Option<f64>,
    data: std::result::Result<MeasurementSet, String>,
}

fn simulate(config: &ExperimentConfig, img: &PreparedImage, grid: (usize, usize), alpha: f64, seed: u64) -> Result<MeasurementSet> {
    let probe = make_circular_probe(config.probe.n, config.probe.radius)?;
    let geometry = make_scan_grid(config.crop, config.crop, grid.0, grid.1, config.probe.n)?;
    let clean = forward::forward(&img.object, &probe, &geometry)?;
    forward::add_shot_noise(&clean, alpha, seed)
}

fn grid_overlap(config: &ExperimentConfig, grid: (usize, usize)) -> Option<f64> {
    let probe = make_circular_probe(config.probe.n, config.probe.radius).ok()?;
    let geometry = make_scan_grid(config.crop, config.crop, grid.0, grid.1, config.probe.n).ok()?;
    overlap_fraction(&probe, &geometry).ok()
}

/// Runs every (image, grid, alpha, solver) tuple. Failures of individual
/// tuples are recorded in their row. When `out_dir` is given, all tables,
/// the manifest and (if enabled) images are written there.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    config.validate()?;
    let images = prepare_images(config)?;

    let mut keys = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for &grid in &config.grids {
            for &alpha in &config.alphas {
                keys.push((i, grid, alpha, tuple_seed(config.seed, &img.id, grid, alpha)));
            }
        }
    }
    let simulated: Vec<Simulated> = par::map_slice(&keys, |&(i, grid, alpha, seed)| Simulated {
        image: i,
        grid,
        alpha,
        seed,
        overlap: grid_overlap(config, grid),
        data: simulate(config, &images[i], grid, alpha, seed).map_err(|e| e.to_string()),
    });

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        if config.save_images {
            write_ground_truth(&dir.join("ground_truth"), &images)?;
            fs::create_dir_all(dir.join("reconstructions"))?;
        }
    }

    let tuples: Vec<(usize, usize)> = (0..simulated.len())
        .flat_map(|m| (0..config.solvers.len()).map(move |s| (m, s)))
        .collect();
    let image_dir = out_dir
        .filter(|_| config.save_images)
        .map(|d| d.join("reconstructions"));
    let rows: Vec<ResultRow> = par::map_slice(&tuples, |&(m, s)| {
        run_tuple(config, &images, &simulated[m], &config.solvers[s], image_dir.as_deref())
    });

    let summary = summarize(&rows);
    let manifest = Manifest {
        seed: config.seed,
        crop: config.crop,
        border: config.border,
        probe: config.probe,
        parallel: par::is_parallel(),
        images: images
            .iter()
            .map(|i| ManifestImage {
                id: i.id.clone(),
                source: i.source.display().to_string(),
                theta0: i.theta0,
            })
            .collect(),
        measurements: simulated
            .iter()
            .map(|s| ManifestTuple {
                image: images[s.image].id.clone(),
                grid: summary::grid_label(s.grid),
                alpha: s.alpha,
                seed: s.seed,
                overlap: s.overlap,
            })
            .collect(),
        solvers: config.solvers.clone(),
    };

    if let Some(dir) = out_dir {
        fs::write(dir.join("results.csv"), rows_to_csv(&rows))?;
        fs::write(dir.join("summary.csv"), summary_to_csv(&summary))?;
        fs::write(dir.join("summary.txt"), summary_to_text(&summary))?;
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("manifest: {e}")))?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
    }
    Ok(ExperimentReport {
        rows,
        summary,
        manifest,
    })
}

fn run_tuple(
    config: &ExperimentConfig,
    images: &[PreparedImage],
    sim: &Simulated,
    solver: &NamedSolver,
    image_dir: Option<&Path>,
) -> ResultRow {
    let img = &images[sim.image];
    let start = Instant::now();
    let mut row = ResultRow {
        image: img.id.clone(),
        solver: solver.name.clone(),
        grid: sim.grid,
        alpha: sim.alpha,
        overlap: sim.overlap.unwrap_or(f64::NAN),
        psnr_a: f64::NAN,
        psnr_phi: f64::NAN,
        iterations: 0,
        final_residual: f64::NAN,
        error: String::new(),
        wall_time: 0.0,
    };
    let result = sim
        .data
        .as_ref()
        .map_err(|e| Error::InvalidArgument(format!("simulation failed: {e}")))
        .and_then(|m| {
            let cfg = SolverConfig {
                required_border: Some(config.border),
                ..solver.config.clone()
            };
            let state = solvers::reconstruct(m, &cfg)?;
            let report = metrics::evaluate(&state.x, &img.object, config.border)?;
            if let Some(dir) = image_dir {
                let stem = format!(
                    "{}_{}_{}_a{}",
                    img.id,
                    solver.name,
                    summary::grid_label(sim.grid),
                    sim.alpha
                );
                save_reconstruction(dir, &stem, &state.x, &img.object, config.border)?;
            }
            let iterations = state.k
                + match cfg.algorithm {
                    solvers::Algorithm::Hqs | solvers::Algorithm::ErrorReduction => cfg.warmstart_iterations(),
                    _ => 0,
                };
            Ok((report, iterations, state.final_residual()))
        });
    match result {
        Ok((report, iterations, residual)) => {
            row.psnr_a = report.psnr_amplitude.db;
            row.psnr_phi = report.psnr_phase.db;
            row.iterations = iterations;
            row.final_residual = residual;
        }
        Err(e) => row.error = e.to_string(),
    }
    row.wall_time = start.elapsed().as_secs_f64();
    row
}

fn save_pngs(dir: &Path, stem: &str, x: &ComplexImage) -> Result<()> {
    let (amp, phase) = x.decompose();
    export::save_gray(dir.join(format!("{stem}_amplitude.png")), &export::amplitude_to_gray(&amp, 1.0))?;
    export::save_gray(dir.join(format!("{stem}_phase.png")), &export::phase_to_gray(&phase))?;
    Ok(())
}

/// Saves the raw iterate and PNGs of it after global-phase alignment on the
/// metric region.
fn save_reconstruction(dir: &Path, stem: &str, x: &ComplexImage, gt: &ComplexImage, border: usize) -> Result<()> {
    crate::io::save_complex(dir.join(format!("{stem}.cimg")), x)?;
    let theta = optimal_global_phase(&x.crop_border(border)?, &gt.crop_border(border)?)?;
    save_pngs(dir, stem, &x.scale(C64::from_polar(1.0, theta)))
}

fn write_ground_truth(dir: &Path, images: &[PreparedImage]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for img in images {
        crate::io::save_complex(dir.join(format!("{}.cimg", img.id)), &img.object)?;
        save_pngs(dir, &img.id, &img.object)?;
    }
    Ok(())
}
