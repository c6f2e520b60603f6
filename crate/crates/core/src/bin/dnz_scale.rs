//! Reference DNZ1 denoiser: multiplies the image by a constant factor.
//!
//! ```text
//! dnz-scale [FACTOR] [--truncate] [--sleep SECONDS] [--fail]
//! ```
//!
//! `--truncate` drops the last byte of the response, `--sleep` delays it and
//! `--fail` exits with status 3; they exercise the client's error paths.

use std::io::{self, Read, Write};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use ptycho_core::denoise::external::decode_request;
use ptycho_core::image::C64;
use ptycho_core::io::{write_complex, write_real, AnyImage};

struct Options {
    factor: f64,
    truncate: bool,
    sleep: f64,
    fail: bool,
}

fn parse(args: impl Iterator<Item = String>) -> Result<Options, String> {
    let mut opts = Options {
        factor: 1.0,
        truncate: false,
        sleep: 0.0,
        fail: false,
    };
    let mut args = args.peekable();
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--truncate" => opts.truncate = true,
            "--fail" => opts.fail = true,
            "--sleep" => {
                let v = args.next().ok_or("--sleep needs a value")?;
                opts.sleep = v.parse().map_err(|_| format!("bad --sleep value {v:?}"))?;
            }
            v => opts.factor = v.parse().map_err(|_| format!("bad factor {v:?}"))?,
        }
    }
    Ok(opts)
}

fn run(opts: &Options) -> Result<(), String> {
    let mut input = Vec::new();
    io::stdin().read_to_end(&mut input).map_err(|e| e.to_string())?;
    if opts.fail {
        return Err("failing on request".into());
    }
    let (_tau, image) = decode_request(&mut input.as_slice()).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    match image {
        AnyImage::Real(img) => write_real(&mut out, &img.map(|v| v * opts.factor)),
        AnyImage::Complex(img) => write_complex(&mut out, &img.map(|v| v * C64::new(opts.factor, 0.0))),
    }
    .map_err(|e| e.to_string())?;
    if opts.truncate {
        out.pop();
    }
    if opts.sleep > 0.0 {
        thread::sleep(Duration::from_secs_f64(opts.sleep));
    }
    io::stdout().write_all(&out).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let result = parse(std::env::args().skip(1)).and_then(|opts| run(&opts));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("dnz-scale: {msg}");
            ExitCode::from(3)
        }
    }
}
