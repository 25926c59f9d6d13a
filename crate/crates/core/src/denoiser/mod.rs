//! Noise predictors `eps_hat = f(z_n, n, zc)` used by the sampler.

mod gaussian;
mod mlp;
mod oracle;

pub use gaussian::{GaussianDenoiser, PosteriorCoeffs, QuantNoise};
pub use mlp::{Mlp, MlpGrad, TrainConfig, TrainExample};
pub use oracle::OracleDenoiser;

use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::schedule::Schedule;

/// Everything a denoiser may need to know about the current step besides
/// the tensors themselves.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub n: usize,
    pub n_r: usize,
    pub eta: f64,
    pub schedule: &'a Schedule,
}

pub trait Denoiser {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent> {
        (**self).predict(ctx, z_n, zc)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent> {
        (**self).predict(ctx, z_n, zc)
    }
}

/// A denoiser of any shipped kind, as stored in parameter blobs.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyDenoiser {
    Oracle(OracleDenoiser),
    Gaussian(GaussianDenoiser),
    Mlp(Mlp),
}

impl Denoiser for AnyDenoiser {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent> {
        match self {
            AnyDenoiser::Oracle(d) => d.predict(ctx, z_n, zc),
            AnyDenoiser::Gaussian(d) => d.predict(ctx, z_n, zc),
            AnyDenoiser::Mlp(d) => d.predict(ctx, z_n, zc),
        }
    }
}

const BLOB_MAGIC: &[u8; 4] = b"RDNZ";
const BLOB_VERSION: u8 = 1;

impl AnyDenoiser {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyDenoiser::Oracle(_) => "oracle",
            AnyDenoiser::Gaussian(_) => "gaussian_analytic",
            AnyDenoiser::Mlp(_) => "mlp",
        }
    }

    pub fn as_mlp_mut(&mut self) -> Result<&mut Mlp> {
        match self {
            AnyDenoiser::Mlp(m) => Ok(m),
            other => Err(Error::Denoiser(format!(
                "training needs an mlp denoiser, got {}",
                other.kind_name()
            ))),
        }
    }

    /// Parameter blob: magic, version, kind byte, `u32` section count, then
    /// sections of `u64` length followed by that many little-endian f64.
    pub fn to_blob(&self) -> Vec<u8> {
        let (kind, sections) = match self {
            AnyDenoiser::Oracle(d) => (0u8, d.to_sections()),
            AnyDenoiser::Gaussian(d) => (1u8, d.to_sections()),
            AnyDenoiser::Mlp(d) => (2u8, d.to_sections()),
        };
        let mut out = Vec::new();
        out.extend_from_slice(BLOB_MAGIC);
        out.push(BLOB_VERSION);
        out.push(kind);
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for s in &sections {
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            for v in s {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::BadMagic);
        }
        let version = r.u8()?;
        if version != BLOB_VERSION {
            return Err(Error::BadVersion(version));
        }
        let kind = r.u8()?;
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u64()? as usize;
            if len > r.remaining() / 8 {
                return Err(Error::Truncated);
            }
            sections.push((0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt("trailing bytes after denoiser sections".into()));
        }
        match kind {
            0 => OracleDenoiser::from_sections(&sections).map(AnyDenoiser::Oracle),
            1 => GaussianDenoiser::from_sections(&sections).map(AnyDenoiser::Gaussian),
            2 => Mlp::from_sections(&sections).map(AnyDenoiser::Mlp),
            k => Err(Error::Corrupt(format!("unknown denoiser kind {k}"))),
        }
    }
}

pub(crate) fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < (1u64 << 40) as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Corrupt(format!("{what} is not a count: {v}")))
    }
}
