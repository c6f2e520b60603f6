//! Denoisers standing in for the proximal step of the splitting schemes.

pub mod external;
pub mod tv;

use serde::{Deserialize, Serialize};

pub use external::ExternalDenoiser;
pub use tv::{tv_prox, tv_prox_traced, tv_prox_weighted, tv_value, TvOutcome};

use crate::error::Result;
use crate::image::{ComplexImage, RealImage, C64};

/// Image plus strength handed to a denoiser. `weight` carries the diagonal
/// `D` of the spatially varying problem `1/2 ||D (u - v)||^2 + ...`.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub strength: f64,
    pub weight: Option<&'a RealImage>,
}

/// TV denoiser parameters. A solver strength `tau` (noise std on the 8-bit
/// scale) becomes the TV weight `scale * (tau / 255)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvParams {
    pub scale: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            scale: 50.0,
            max_iter: tv::DEFAULT_MAX_ITER,
            tol: tv::DEFAULT_TOL,
        }
    }
}

impl TvParams {
    pub fn weight_for(&self, strength: f64) -> f64 {
        self.scale * (strength / 255.0).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserKind {
    #[default]
    Identity,
    /// Projection onto the nonnegative real orthant: `max(Re z, 0)`.
    NonnegProjection,
    Tv(TvParams),
    External(ExternalDenoiser),
}

impl DenoiserKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::NonnegProjection => "nonneg_projection",
            Self::Tv(_) => "tv",
            Self::External(_) => "external",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::External(ext) => ext.validate(),
            _ => Ok(()),
        }
    }

    /// Denoises a complex image. TV works on the real and imaginary parts
    /// separately; external denoisers receive the complex image and ignore
    /// `weight`.
    pub fn denoise(&self, z: &ComplexImage, req: DenoiseRequest<'_>) -> Result<ComplexImage> {
        match self {
            Self::Identity => Ok(z.clone()),
            Self::NonnegProjection => Ok(z.map(|v| C64::new(v.re.max(0.0), 0.0))),
            Self::Tv(params) => {
                let weight = params.weight_for(req.strength);
                complex_split_denoise(z, |part| match req.weight {
                    Some(d) => tv_prox_weighted(part, weight, d, params.max_iter, params.tol),
                    None => Ok(tv_prox(part, weight, params.max_iter, params.tol)),
                })
            }
            Self::External(ext) => ext.denoise_complex(z, req.strength),
        }
    }
}

pub fn nonneg_projection(v: &RealImage) -> RealImage {
    v.map(|x| x.max(0.0))
}

/// Applies a real-image denoiser to `Re z + s` and `Im z + s` with
/// `s = max |z|`, then removes the shift.
///
/// The result is assembled as `z + (base(z + s) - (z + s))`, which equals
/// `base(z + s) - s` and is exact for an identity base.
pub fn complex_split_denoise<F>(z: &ComplexImage, base: F) -> Result<ComplexImage>
where
    F: Fn(&RealImage) -> Result<RealImage>,
{
    let s = z.max_amplitude();
    let re = z.re().map(|v| v + s);
    let im = z.im().map(|v| v + s);
    let re_out = base(&re)?;
    let im_out = base(&im)?;
    re.ensure_same_shape(&re_out)?;
    im.ensure_same_shape(&im_out)?;
    let data = z
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            C64::new(
                v.re + (re_out.data()[i] - re.data()[i]),
                v.im + (im_out.data()[i] - im.data()[i]),
            )
        })
        .collect();
    ComplexImage::new(z.height(), z.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ComplexImage {
        ComplexImage::from_fn(h, w, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn nonneg_cases() {
        let v = RealImage::new(1, 2, vec![-1.0, 2.0]).unwrap();
        let p = nonneg_projection(&v);
        assert_eq!(p.data(), &[0.0, 2.0]);
        assert_eq!(nonneg_projection(&p), p);
        let pos = RealImage::new(1, 3, vec![0.5, 1.0, 3.0]).unwrap();
        assert_eq!(nonneg_projection(&pos), pos);
    }

    #[test]
    fn split_identity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut z = random(&mut rng, 7, 5);
        z.set(0, 0, C64::new(1e-300, -3e-17));
        let out = complex_split_denoise(&z, |v| Ok(v.clone())).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn split_nonneg_leaves_shifted_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random(&mut rng, 6, 6);
        let out = complex_split_denoise(&z, |v| Ok(nonneg_projection(v))).unwrap();
        for (a, b) in out.data().iter().zip(z.data()) {
            assert_eq!(a.re, b.re);
        }
    }

    #[test]
    fn split_tv_matches_direct_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random(&mut rng, 8, 8);
        let tau = 0.2;
        let out = complex_split_denoise(&z, |v| Ok(tv_prox(v, tau, 50, 1e-5))).unwrap();
        let s = z.max_amplitude();
        let re = tv_prox(&z.re().map(|v| v + s), tau, 50, 1e-5).map(|v| v - s);
        let im = tv_prox(&z.im().map(|v| v + s), tau, 50, 1e-5).map(|v| v - s);
        for (i, v) in out.data().iter().enumerate() {
            assert!((v.re - re.data()[i]).abs() < 1e-12);
            assert!((v.im - im.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn nonneg_kind_projects_to_real_orthant() {
        let z = ComplexImage::new(1, 2, vec![C64::new(-1.0, 2.0), C64::new(0.5, -0.5)]).unwrap();
        let out = DenoiserKind::NonnegProjection
            .denoise(&z, DenoiseRequest { strength: 1.0, weight: None })
            .unwrap();
        assert_eq!(out.data(), &[C64::new(0.0, 0.0), C64::new(0.5, 0.0)]);
    }

    #[test]
    fn kind_parses_from_toml() {
        let kind: DenoiserKind = toml::from_str("kind = \"tv\"\nscale = 2.0").unwrap();
        assert_eq!(
            kind,
            DenoiserKind::Tv(TvParams {
                scale: 2.0,
                ..TvParams::default()
            })
        );
        let kind: DenoiserKind = toml::from_str("kind = \"identity\"").unwrap();
        assert_eq!(kind, DenoiserKind::Identity);
    }
}
