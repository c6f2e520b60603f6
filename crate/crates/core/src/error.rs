use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("border of {border}px is too large for a {height}x{width} image")]
    BorderTooLarge {
        border: usize,
        height: usize,
        width: usize,
    },
    #[error("ground-truth amplitude is identically zero")]
    ZeroGroundTruth,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("window index {index} out of range (L = {count})")]
    WindowIndex { index: usize, count: usize },
    #[error("weight must be strictly positive, found {value} at pixel {index}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("{count} pixels inside the metric region receive no illumination")]
    UncoveredRegion { count: usize },
    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },
    #[error("external denoiser could not be started: {0}")]
    DenoiserSpawn(#[source] io::Error),
    #[error("external denoiser timed out after {0:?}")]
    DenoiserTimeout(std::time::Duration),
    #[error("external denoiser exited with {status}: {stderr}")]
    DenoiserFailed { status: String, stderr: String },
    #[error("external denoiser returned a malformed response: {0}")]
    DenoiserMalformed(String),
    #[error("external denoiser returned shape {got:?}, expected {expected:?}")]
    DenoiserShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("config: {0}")]
    Config(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
