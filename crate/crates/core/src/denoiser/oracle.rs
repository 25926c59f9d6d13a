use std::collections::BTreeMap;

use super::{as_count, Denoiser, StepContext};
use crate::diffusion::{
    endpoint_sample, forward_coefficients, reverse_coeffs_between, validate_step_list,
    NoiseSource, ResidualPair,
};
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::schedule::Schedule;

/// Returns pre-recorded noise for each step. A verification device: fed the
/// true forward noise, the sampler must reproduce `z0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleDenoiser {
    table: BTreeMap<usize, Latent>,
}

impl OracleDenoiser {
    pub fn new(table: BTreeMap<usize, Latent>) -> Self {
        Self { table }
    }

    pub fn insert(&mut self, n: usize, eps: Latent) {
        self.table.insert(n, eps);
    }

    pub fn table(&self) -> &BTreeMap<usize, Latent> {
        &self.table
    }

    /// Runs the reverse process with the true `z0` substituted for every
    /// estimate and records, at each step, the noise that makes the current
    /// state consistent with the forward process.
    ///
    /// `noise` must yield the same draws the later sampling run will see.
    pub fn teacher_forced(
        pair: &ResidualPair,
        n_r: usize,
        steps: &[usize],
        eta: f64,
        s: &Schedule,
        noise: &mut dyn NoiseSource,
    ) -> Result<Self> {
        validate_step_list(steps, n_r)?;
        let (z0, zc) = (pair.z0(), pair.zc());
        let eps = noise.next_noise(zc.shape())?;
        let mut z = endpoint_sample(zc, n_r, s, &eps)?;
        let mut table = BTreeMap::new();
        for (i, &n) in steps.iter().enumerate() {
            let prev = steps.get(i + 1).copied().unwrap_or(0);
            let target = if n == n_r {
                zc
            } else {
                let (c0, cc, b) = forward_coefficients(s, n, n_r, eta)?;
                let implied: Vec<f64> = z
                    .data()
                    .iter()
                    .zip(z0.data())
                    .zip(zc.data())
                    .map(|((zn, a), c)| (zn - c0 * a - cc * c) / b)
                    .collect();
                table.insert(n, Latent::new(z.shape().to_vec(), implied)?);
                z0
            };
            let c = reverse_coeffs_between(s, n, prev, n_r, eta)?;
            z = z.lincomb(c.iota, target, c.zeta)?;
            if c.sigma != 0.0 {
                let e = noise.next_noise(z.shape())?;
                z = z.lincomb(1.0, &e, c.sigma)?;
            }
        }
        Ok(Self { table })
    }

    pub(super) fn to_sections(&self) -> Vec<Vec<f64>> {
        self.table
            .iter()
            .map(|(n, eps)| {
                let mut s = vec![*n as f64, eps.shape().len() as f64];
                s.extend(eps.shape().iter().map(|d| *d as f64));
                s.extend_from_slice(eps.data());
                s
            })
            .collect()
    }

    pub(super) fn from_sections(sections: &[Vec<f64>]) -> Result<Self> {
        let mut table = BTreeMap::new();
        for s in sections {
            if s.len() < 2 {
                return Err(Error::Corrupt("oracle section too short".into()));
            }
            let n = as_count(s[0], "oracle step")?;
            let rank = as_count(s[1], "oracle rank")?;
            let dims = s
                .get(2..2 + rank)
                .ok_or_else(|| Error::Corrupt("oracle shape truncated".into()))?
                .iter()
                .map(|d| as_count(*d, "oracle dim"))
                .collect::<Result<Vec<_>>>()?;
            let data = s[2 + rank..].to_vec();
            table.insert(n, Latent::new(dims, data)?);
        }
        Ok(Self { table })
    }
}

impl Denoiser for OracleDenoiser {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, _zc: &Latent) -> Result<Latent> {
        let eps = self
            .table
            .get(&ctx.n)
            .ok_or(Error::MissingOracleEntry(ctx.n))?;
        z_n.ensure_same_shape(eps)?;
        Ok(eps.clone())
    }
}
