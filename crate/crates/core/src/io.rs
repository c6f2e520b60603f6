//! Binary file formats. All integers are unsigned 32-bit little-endian and
//! all reals are little-endian IEEE-754 doubles.
//!
//! ```text
//! CIMG1   "CIMG1" | height u32 | width u32 | (re f64, im f64) * h*w, row-major
//! RIMG1   "RIMG1" | height u32 | width u32 | f64 * h*w, row-major
//! PMEAS1  "PMEAS1" | image_h u32 | image_w u32 | N u32 | L u32
//!         | (row u32, col u32) * L | alpha f64 | seeded u8 | seed u64
//!         | f64 * N*N * L (amplitudes in position order) | probe as CIMG1
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{MeasurementSet, Probe, ScanGeometry};
use crate::image::{ComplexImage, RealImage, C64};

pub const CIMG_MAGIC: &[u8; 5] = b"CIMG1";
pub const RIMG_MAGIC: &[u8; 5] = b"RIMG1";
pub const PMEAS_MAGIC: &[u8; 6] = b"PMEAS1";

// Refuse headers that would allocate absurd buffers.
const MAX_PIXELS: usize = 1 << 28;

fn format_err(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], format: &'static str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format, format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, format: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, format, "header")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, format: &'static str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, format, "header")?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize, format: &'static str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact_or(r, &mut bytes, format, "pixel data")?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8], format: &'static str) -> Result<()> {
    let mut b = vec![0u8; magic.len()];
    read_exact_or(r, &mut b, format, "magic")?;
    if b != magic {
        return Err(format_err(format, format!("bad magic {:?}", String::from_utf8_lossy(&b))));
    }
    Ok(())
}

fn read_dims<R: Read>(r: &mut R, format: &'static str) -> Result<(usize, usize)> {
    let h = read_u32(r, format)? as usize;
    let w = read_u32(r, format)? as usize;
    if h.saturating_mul(w) > MAX_PIXELS {
        return Err(format_err(format, format!("unreasonable dimensions {h}x{w}")));
    }
    Ok((h, w))
}

fn dim_u32(v: usize, format: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| format_err(format, format!("dimension {v} exceeds u32")))
}

pub fn write_complex<W: Write>(w: &mut W, img: &ComplexImage) -> Result<()> {
    w.write_all(CIMG_MAGIC)?;
    w.write_all(&dim_u32(img.height(), "CIMG1")?.to_le_bytes())?;
    w.write_all(&dim_u32(img.width(), "CIMG1")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(img.len() * 16);
    for v in img.data() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_complex<R: Read>(r: &mut R) -> Result<ComplexImage> {
    read_magic(r, CIMG_MAGIC, "CIMG1")?;
    read_complex_body(r)
}

fn read_complex_body<R: Read>(r: &mut R) -> Result<ComplexImage> {
    let (h, w) = read_dims(r, "CIMG1")?;
    let raw = read_f64s(r, 2 * h * w, "CIMG1")?;
    let data = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    ComplexImage::new(h, w, data)
}

pub fn write_real<W: Write>(w: &mut W, img: &RealImage) -> Result<()> {
    w.write_all(RIMG_MAGIC)?;
    w.write_all(&dim_u32(img.height(), "RIMG1")?.to_le_bytes())?;
    w.write_all(&dim_u32(img.width(), "RIMG1")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(img.len() * 8);
    for v in img.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_real<R: Read>(r: &mut R) -> Result<RealImage> {
    read_magic(r, RIMG_MAGIC, "RIMG1")?;
    read_real_body(r)
}

fn read_real_body<R: Read>(r: &mut R) -> Result<RealImage> {
    let (h, w) = read_dims(r, "RIMG1")?;
    let data = read_f64s(r, h * w, "RIMG1")?;
    RealImage::new(h, w, data)
}

/// Either image kind, as found in a stream whose magic is not known upfront.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyImage {
    Real(RealImage),
    Complex(ComplexImage),
}

pub fn read_any<R: Read>(r: &mut R) -> Result<AnyImage> {
    let mut magic = [0u8; 5];
    read_exact_or(r, &mut magic, "CIMG1/RIMG1", "magic")?;
    match &magic {
        m if m == CIMG_MAGIC => Ok(AnyImage::Complex(read_complex_body(r)?)),
        m if m == RIMG_MAGIC => Ok(AnyImage::Real(read_real_body(r)?)),
        other => Err(format_err(
            "CIMG1/RIMG1",
            format!("bad magic {:?}", String::from_utf8_lossy(other)),
        )),
    }
}

pub fn write_measurements<W: Write>(w: &mut W, m: &MeasurementSet) -> Result<()> {
    const F: &str = "PMEAS1";
    let g = &m.geometry;
    let (h, wd) = g.image_shape();
    w.write_all(PMEAS_MAGIC)?;
    for v in [h, wd, g.window(), g.len()] {
        w.write_all(&dim_u32(v, F)?.to_le_bytes())?;
    }
    for &(r, c) in g.positions() {
        w.write_all(&dim_u32(r, F)?.to_le_bytes())?;
        w.write_all(&dim_u32(c, F)?.to_le_bytes())?;
    }
    w.write_all(&m.alpha.to_le_bytes())?;
    w.write_all(&[m.seed.is_some() as u8])?;
    w.write_all(&m.seed.unwrap_or(0).to_le_bytes())?;
    let mut buf = Vec::with_capacity(g.len() * g.window().pow(2) * 8);
    for y in &m.amplitudes {
        for v in y.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    write_complex(w, m.probe.values())
}

pub fn read_measurements<R: Read>(r: &mut R) -> Result<MeasurementSet> {
    const F: &str = "PMEAS1";
    read_magic(r, PMEAS_MAGIC, F)?;
    let h = read_u32(r, F)? as usize;
    let w = read_u32(r, F)? as usize;
    let n = read_u32(r, F)? as usize;
    let count = read_u32(r, F)? as usize;
    if h.saturating_mul(w) > MAX_PIXELS || count.saturating_mul(n * n) > MAX_PIXELS {
        return Err(format_err(F, "unreasonable dimensions"));
    }
    let mut positions = Vec::with_capacity(count);
    for _ in 0..count {
        let row = read_u32(r, F)? as usize;
        let col = read_u32(r, F)? as usize;
        positions.push((row, col));
    }
    let alpha = f64::from_bits(read_u64(r, F)?);
    let mut flag = [0u8; 1];
    read_exact_or(r, &mut flag, F, "seed flag")?;
    let seed = read_u64(r, F)?;
    let seed = match flag[0] {
        0 => None,
        1 => Some(seed),
        other => return Err(format_err(F, format!("bad seed flag {other}"))),
    };
    let mut amplitudes = Vec::with_capacity(count);
    for _ in 0..count {
        amplitudes.push(RealImage::new(n, n, read_f64s(r, n * n, F)?)?);
    }
    let probe = Probe::new(read_complex(r)?)?;
    let geometry = ScanGeometry::with_repeats(h, w, n, positions)?;
    MeasurementSet::new(geometry, probe, amplitudes, alpha, seed)
}

pub fn save_complex(path: impl AsRef<Path>, img: &ComplexImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_complex(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn load_complex(path: impl AsRef<Path>) -> Result<ComplexImage> {
    read_complex(&mut BufReader::new(File::open(path)?))
}

pub fn save_real(path: impl AsRef<Path>, img: &RealImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_real(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn load_real(path: impl AsRef<Path>) -> Result<RealImage> {
    read_real(&mut BufReader::new(File::open(path)?))
}

pub fn save_measurements(path: impl AsRef<Path>, m: &MeasurementSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_measurements(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    read_measurements(&mut BufReader::new(File::open(path)?))
}
