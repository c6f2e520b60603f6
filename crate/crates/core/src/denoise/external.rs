//! Out-of-process denoisers speaking the DNZ1 protocol.
//!
//! One request per process: the request is written to the child's stdin and
//! the child writes the denoised image to stdout, then exits with status 0.
//!
//! ```text
//! request   "DNZ1" | mode u8 (0 = real, 1 = complex) | tau f64 LE | RIMG1 or CIMG1 image
//! response  RIMG1 or CIMG1 image of the same kind and shape
//! ```

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ComplexImage, RealImage};
use crate::io::{self, AnyImage};

pub const DNZ_MAGIC: &[u8; 4] = b"DNZ1";
pub const MODE_REAL: u8 = 0;
pub const MODE_COMPLEX: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalDenoiser {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    60.0
}

pub fn encode_request(tau: f64, image: &AnyImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DNZ_MAGIC);
    match image {
        AnyImage::Real(img) => {
            buf.push(MODE_REAL);
            buf.extend_from_slice(&tau.to_le_bytes());
            io::write_real(&mut buf, img)?;
        }
        AnyImage::Complex(img) => {
            buf.push(MODE_COMPLEX);
            buf.extend_from_slice(&tau.to_le_bytes());
            io::write_complex(&mut buf, img)?;
        }
    }
    Ok(buf)
}

/// Parses a request; used by denoiser servers.
pub fn decode_request<R: Read>(r: &mut R) -> Result<(f64, AnyImage)> {
    let bad = |reason: &str| Error::Format {
        format: "DNZ1",
        reason: reason.into(),
    };
    let mut head = [0u8; 13];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[..4] != DNZ_MAGIC {
        return Err(bad("bad magic"));
    }
    let tau = f64::from_le_bytes(head[5..13].try_into().unwrap());
    let image = io::read_any(r)?;
    let consistent = matches!(
        (head[4], &image),
        (MODE_REAL, AnyImage::Real(_)) | (MODE_COMPLEX, AnyImage::Complex(_))
    );
    if !consistent {
        return Err(bad("mode byte does not match image kind"));
    }
    Ok((tau, image))
}

impl ExternalDenoiser {
    pub fn new(command: Vec<String>, timeout: Duration) -> Result<Self> {
        let ext = Self {
            command,
            timeout_secs: timeout.as_secs_f64(),
        };
        ext.validate()?;
        Ok(ext)
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.first().is_none_or(|p| p.is_empty()) {
            return Err(Error::Config("external denoiser command is empty".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("external denoiser timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn denoise_complex(&self, z: &ComplexImage, tau: f64) -> Result<ComplexImage> {
        match self.round_trip(tau, &AnyImage::Complex(z.clone()))? {
            AnyImage::Complex(out) => check_shape(z.shape(), out),
            AnyImage::Real(_) => Err(Error::DenoiserMalformed(
                "real image returned for a complex request".into(),
            )),
        }
    }

    pub fn denoise_real(&self, v: &RealImage, tau: f64) -> Result<RealImage> {
        match self.round_trip(tau, &AnyImage::Real(v.clone()))? {
            AnyImage::Real(out) => check_shape(v.shape(), out),
            AnyImage::Complex(_) => Err(Error::DenoiserMalformed(
                "complex image returned for a real request".into(),
            )),
        }
    }

    fn round_trip(&self, tau: f64, image: &AnyImage) -> Result<AnyImage> {
        self.validate()?;
        let request = encode_request(tau, image)?;
        let stdout = self.run(request)?;
        let mut cursor = stdout.as_slice();
        let out = io::read_any(&mut cursor).map_err(|e| Error::DenoiserMalformed(e.to_string()))?;
        if !cursor.is_empty() {
            return Err(Error::DenoiserMalformed(format!(
                "{} trailing bytes after image",
                cursor.len()
            )));
        }
        Ok(out)
    }

    fn run(&self, request: Vec<u8>) -> Result<Vec<u8>> {
        let timeout = Duration::from_secs_f64(self.timeout_secs);
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(Error::DenoiserSpawn)?;

        let mut stdin = child.stdin.take().expect("stdin piped");
        // A child that exits without reading produces a broken pipe here; its
        // exit status is reported instead.
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&request);
        });
        let mut stdout = child.stdout.take().expect("stdout piped");
        let reader = thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let mut stderr = child.stderr.take().expect("stderr piped");
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let start = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if start.elapsed() > timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::DenoiserTimeout(timeout));
            }
            thread::sleep(Duration::from_millis(2));
        };
        let _ = writer.join();
        let stdout = reader
            .join()
            .map_err(|_| Error::DenoiserMalformed("stdout reader panicked".into()))??;
        let stderr = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(Error::DenoiserFailed {
                status: status.to_string(),
                stderr: stderr.trim().to_string(),
            });
        }
        Ok(stdout)
    }
}

fn check_shape<T: crate::image::HasShape>(expected: (usize, usize), out: T) -> Result<T> {
    if out.shape() != expected {
        return Err(Error::DenoiserShape {
            expected,
            got: out.shape(),
        });
    }
    Ok(out)
}
