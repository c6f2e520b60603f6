//! Ptychographic measurement model.
//!
//! For each scan position `l` the window operator `E_l` copies an `N x N`
//! patch whose top-left corner is `p_l`; `A_l = P . E_l` multiplies the patch
//! by the probe, and the detector records `y_l = |FFT2(A_l x)|` with an
//! unnormalized forward DFT. Window indices are zero-based.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::{check_shape, ComplexImage, RealImage, C64};
use crate::par;

/// Complex illumination window.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    values: ComplexImage,
}

impl Probe {
    pub fn new(values: ComplexImage) -> Result<Self> {
        if values.height() != values.width() || values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "probe must be square and non-empty, got {:?}",
                values.shape()
            )));
        }
        if !values.is_finite() {
            return Err(Error::InvalidArgument("probe has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn size(&self) -> usize {
        self.values.height()
    }

    pub fn values(&self) -> &ComplexImage {
        &self.values
    }

    /// Pixels where `|P| > 0`.
    pub fn support(&self) -> Vec<bool> {
        self.values.data().iter().map(|v| v.norm_sqr() > 0.0).collect()
    }

    pub fn support_size(&self) -> usize {
        self.support().into_iter().filter(|&s| s).count()
    }

    pub fn intensity(&self) -> RealImage {
        self.values.map(|v| C64::new(v.norm_sqr(), 0.0)).re()
    }

    pub fn max_intensity(&self) -> f64 {
        self.values
            .data()
            .iter()
            .map(|v| v.norm_sqr())
            .fold(0.0, f64::max)
    }
}

/// Binary disc of the given radius centred in an `n x n` window.
pub fn make_circular_probe(n: usize, radius: f64) -> Result<Probe> {
    if n == 0 || !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "circular probe needs n >= 1 and radius > 0 (n = {n}, radius = {radius})"
        )));
    }
    let c = (n as f64 - 1.0) / 2.0;
    let r2 = radius * radius;
    let values = ComplexImage::from_fn(n, n, |i, j| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        if di * di + dj * dj <= r2 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Probe::new(values)
}

/// Ordered probe positions over an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanGeometry {
    image_h: usize,
    image_w: usize,
    window_n: usize,
    positions: Vec<(usize, usize)>,
}

impl ScanGeometry {
    pub fn new(
        image_h: usize,
        image_w: usize,
        window_n: usize,
        positions: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if window_n == 0 || window_n > image_h || window_n > image_w {
            return Err(Error::InvalidGeometry(format!(
                "window {window_n} does not fit a {image_h}x{image_w} image"
            )));
        }
        if positions.is_empty() {
            return Err(Error::InvalidGeometry("no scan positions".into()));
        }
        for &(r, c) in &positions {
            if r + window_n > image_h || c + window_n > image_w {
                return Err(Error::InvalidGeometry(format!(
                    "window at ({r}, {c}) leaves the image"
                )));
            }
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGeometry("duplicate scan positions".into()));
        }
        Ok(Self {
            image_h,
            image_w,
            window_n,
            positions,
        })
    }

    /// Like [`ScanGeometry::new`] but allows repeated positions, which only
    /// make sense for degenerate test configurations.
    pub fn with_repeats(
        image_h: usize,
        image_w: usize,
        window_n: usize,
        positions: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mut unique = positions.clone();
        unique.sort_unstable();
        unique.dedup();
        Self::new(image_h, image_w, window_n, unique)?;
        Ok(Self {
            image_h,
            image_w,
            window_n,
            positions,
        })
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_h, self.image_w)
    }

    pub fn window(&self) -> usize {
        self.window_n
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, index: usize) -> Result<(usize, usize)> {
        self.positions
            .get(index)
            .copied()
            .ok_or(Error::WindowIndex {
                index,
                count: self.positions.len(),
            })
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn lattice_offsets(extent: usize, window: usize, count: usize) -> Vec<usize> {
    let span = (extent - window) as f64;
    if count == 1 {
        return vec![round_half_up(span / 2.0)];
    }
    (0..count)
        .map(|t| round_half_up(t as f64 * span / (count - 1) as f64))
        .collect()
}

/// Evenly spaced `grid_rows x grid_cols` lattice of windows, row-major.
pub fn make_scan_grid(
    image_h: usize,
    image_w: usize,
    grid_rows: usize,
    grid_cols: usize,
    window_n: usize,
) -> Result<ScanGeometry> {
    if grid_rows == 0 || grid_cols == 0 {
        return Err(Error::InvalidGeometry("grid needs at least one row and column".into()));
    }
    if window_n > image_h || window_n > image_w {
        return Err(Error::InvalidGeometry(format!(
            "window {window_n} larger than image {image_h}x{image_w}"
        )));
    }
    let rows = lattice_offsets(image_h, window_n, grid_rows);
    let cols = lattice_offsets(image_w, window_n, grid_cols);
    let mut positions = Vec::with_capacity(grid_rows * grid_cols);
    for &r in &rows {
        for &c in &cols {
            positions.push((r, c));
        }
    }
    ScanGeometry::new(image_h, image_w, window_n, positions)
}

/// Intersection over union of the probe support at the first two scan
/// positions that share a row.
pub fn overlap_fraction(probe: &Probe, geometry: &ScanGeometry) -> Result<f64> {
    let pos = geometry.positions();
    let (a, b) = pos
        .iter()
        .enumerate()
        .find_map(|(i, p)| pos[i + 1..].iter().find(|q| q.0 == p.0).map(|q| (*p, *q)))
        .ok_or_else(|| {
            Error::InvalidGeometry("overlap needs two positions in the same row".into())
        })?;
    Ok(support_iou(probe, b.1.abs_diff(a.1)))
}

/// IoU of the probe support and its copy shifted right by `stride` pixels.
pub fn support_iou(probe: &Probe, stride: usize) -> f64 {
    let n = probe.size();
    let support = probe.support();
    let at = |r: usize, c: isize| -> bool {
        c >= 0 && (c as usize) < n && support[r * n + c as usize]
    };
    let (mut inter, mut union) = (0usize, 0usize);
    for r in 0..n {
        for c in 0..(n + stride) as isize {
            let s1 = at(r, c);
            let s2 = at(r, c - stride as isize);
            inter += (s1 && s2) as usize;
            union += (s1 || s2) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `E_l x`: the `N x N` patch at scan position `index`.
pub fn extract_window(x: &ComplexImage, geometry: &ScanGeometry, index: usize) -> Result<ComplexImage> {
    check_shape(geometry.image_shape(), x.shape())?;
    let (r0, c0) = geometry.position(index)?;
    let n = geometry.window();
    Ok(ComplexImage::from_fn(n, n, |r, c| x.get(r0 + r, c0 + c)))
}

/// `E_l^* w`: places the patch into an otherwise zero image.
pub fn embed_window(w: &ComplexImage, geometry: &ScanGeometry, index: usize) -> Result<ComplexImage> {
    let n = geometry.window();
    check_shape((n, n), w.shape())?;
    let (r0, c0) = geometry.position(index)?;
    let (h, wd) = geometry.image_shape();
    let mut out = ComplexImage::zeros(h, wd);
    for r in 0..n {
        for c in 0..n {
            out.set(r0 + r, c0 + c, w.get(r, c));
        }
    }
    Ok(out)
}

/// `A_l x = P . E_l x`.
pub fn apply_a(x: &ComplexImage, probe: &Probe, geometry: &ScanGeometry, index: usize) -> Result<ComplexImage> {
    check_probe(probe, geometry)?;
    let mut w = extract_window(x, geometry, index)?;
    for (v, p) in w.data_mut().iter_mut().zip(probe.values().data()) {
        *v *= p;
    }
    Ok(w)
}

/// `A_l^* w = E_l^*(conj(P) . w)`.
pub fn apply_a_adjoint(w: &ComplexImage, probe: &Probe, geometry: &ScanGeometry, index: usize) -> Result<ComplexImage> {
    check_probe(probe, geometry)?;
    let n = geometry.window();
    check_shape((n, n), w.shape())?;
    let mut weighted = w.clone();
    for (v, p) in weighted.data_mut().iter_mut().zip(probe.values().data()) {
        *v *= p.conj();
    }
    embed_window(&weighted, geometry, index)
}

fn check_probe(probe: &Probe, geometry: &ScanGeometry) -> Result<()> {
    if probe.size() != geometry.window() {
        return Err(Error::ShapeMismatch {
            expected: (geometry.window(), geometry.window()),
            got: probe.values().shape(),
        });
    }
    Ok(())
}

/// `sum_l E_l^*(|P|^2)`: accumulated probe intensity per pixel.
pub fn intensity_weight_map(probe: &Probe, geometry: &ScanGeometry) -> Result<RealImage> {
    check_probe(probe, geometry)?;
    let (h, w) = geometry.image_shape();
    let n = geometry.window();
    let intensity = probe.intensity();
    let mut map = RealImage::zeros(h, w);
    for &(r0, c0) in geometry.positions() {
        for r in 0..n {
            let row = &mut map.data_mut()[(r0 + r) * w + c0..(r0 + r) * w + c0 + n];
            for (m, p) in row.iter_mut().zip(&intensity.data()[r * n..(r + 1) * n]) {
                *m += p;
            }
        }
    }
    Ok(map)
}

/// Smallest weight inside the region left after removing `border` pixels.
pub fn min_weight_in_crop(weights: &RealImage, border: usize) -> Result<f64> {
    Ok(weights.crop_border(border)?.min())
}

/// Simulated or loaded far-field amplitudes for every scan position.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub geometry: ScanGeometry,
    pub probe: Probe,
    pub amplitudes: Vec<RealImage>,
    pub alpha: f64,
    /// `None` for noiseless data.
    pub seed: Option<u64>,
}

impl MeasurementSet {
    pub fn new(
        geometry: ScanGeometry,
        probe: Probe,
        amplitudes: Vec<RealImage>,
        alpha: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        check_probe(&probe, &geometry)?;
        if amplitudes.len() != geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitude arrays for {} positions",
                amplitudes.len(),
                geometry.len()
            )));
        }
        let n = geometry.window();
        for y in &amplitudes {
            check_shape((n, n), y.shape())?;
            if y.data().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "amplitudes must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(Self {
            geometry,
            probe,
            amplitudes,
            alpha,
            seed,
        })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// The forward operator with its FFT plan prepared once.
#[derive(Debug, Clone)]
pub struct Ptychography {
    probe: Probe,
    geometry: ScanGeometry,
    fft: Fft2,
}

impl Ptychography {
    pub fn new(probe: Probe, geometry: ScanGeometry) -> Result<Self> {
        check_probe(&probe, &geometry)?;
        let n = geometry.window();
        Ok(Self {
            probe,
            geometry,
            fft: Fft2::new(n, n),
        })
    }

    pub fn probe(&self) -> &Probe {
        &self.probe
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Window pixel count `N^2`.
    pub fn window_pixels(&self) -> usize {
        self.geometry.window().pow(2)
    }

    pub fn exit_wave(&self, x: &ComplexImage, index: usize) -> Result<ComplexImage> {
        apply_a(x, &self.probe, &self.geometry, index)
    }

    /// `FFT2(A_l x)`.
    pub fn spectrum(&self, x: &ComplexImage, index: usize) -> Result<ComplexImage> {
        let mut w = self.exit_wave(x, index)?;
        self.fft.forward(w.data_mut());
        Ok(w)
    }

    /// Spectra for all positions, in position order.
    pub fn spectra(&self, x: &ComplexImage) -> Result<Vec<ComplexImage>> {
        check_shape(self.geometry.image_shape(), x.shape())?;
        par::map_indexed(self.geometry.len(), |l| self.spectrum(x, l))
            .into_iter()
            .collect()
    }

    /// `(sum_l A_l^* z_l, sum_l |A_l|^2)`, accumulated in position order.
    pub fn back_project(&self, windows: &[ComplexImage]) -> Result<ComplexImage> {
        if windows.len() != self.geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "{} windows for {} positions",
                windows.len(),
                self.geometry.len()
            )));
        }
        let (h, w) = self.geometry.image_shape();
        let n = self.geometry.window();
        let probe = self.probe.values().data();
        let mut acc = ComplexImage::zeros(h, w);
        for (&(r0, c0), z) in self.geometry.positions().iter().zip(windows) {
            check_shape((n, n), z.shape())?;
            let out = acc.data_mut();
            for r in 0..n {
                let base = (r0 + r) * w + c0;
                for c in 0..n {
                    out[base + c] += probe[r * n + c].conj() * z.data()[r * n + c];
                }
            }
        }
        Ok(acc)
    }

    pub fn weight_map(&self) -> RealImage {
        intensity_weight_map(&self.probe, &self.geometry).expect("probe checked at construction")
    }

    /// Noiseless amplitudes `|FFT2(A_l x)|`.
    pub fn measure(&self, x: &ComplexImage) -> Result<Vec<RealImage>> {
        Ok(self.spectra(x)?.iter().map(ComplexImage::amplitude).collect())
    }

    /// `||y - G(x)|| / ||y||` from precomputed spectra of `x`.
    pub fn relative_residual(spectra: &[ComplexImage], y: &[RealImage]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (s, m) in spectra.iter().zip(y) {
            for (v, a) in s.data().iter().zip(m.data()) {
                num += (a - v.norm()).powi(2);
                den += a * a;
            }
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    }
}

/// Noiseless measurements of `x`.
pub fn forward(x: &ComplexImage, probe: &Probe, geometry: &ScanGeometry) -> Result<MeasurementSet> {
    let op = Ptychography::new(probe.clone(), geometry.clone())?;
    let amplitudes = op.measure(x)?;
    MeasurementSet::new(geometry.clone(), probe.clone(), amplitudes, 0.0, None)
}

/// Random generator for scan position `index`: one independent stream per
/// window so the draw is independent of scheduling.
pub fn window_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Shot-noise perturbation of one intensity before clamping:
/// `I + alpha * sqrt(I) * eta`, the Gaussian approximation of
/// `I' / alpha^2 ~ Poisson(I / alpha^2)`.
pub fn perturb_intensity(intensity: f64, alpha: f64, eta: f64) -> f64 {
    intensity + alpha * intensity.sqrt() * eta
}

/// Applies shot noise in the intensity domain and stores amplitudes
/// `sqrt(max(I', 0))`.
pub fn add_shot_noise(measurements: &MeasurementSet, alpha: f64, seed: u64) -> Result<MeasurementSet> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        let mut out = measurements.clone();
        out.seed = Some(seed);
        return Ok(out);
    }
    let amplitudes = par::map_indexed(measurements.amplitudes.len(), |l| {
        let mut rng = window_rng(seed, l);
        measurements.amplitudes[l].map(|y| {
            let eta: f64 = StandardNormal.sample(&mut rng);
            perturb_intensity(y * y, alpha, eta).max(0.0).sqrt()
        })
    });
    MeasurementSet::new(
        measurements.geometry.clone(),
        measurements.probe.clone(),
        amplitudes,
        alpha,
        Some(seed),
    )
}
