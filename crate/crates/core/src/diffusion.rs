//! Compression-aware residual diffusion.
//!
//! The forward process shifts the usual DDPM marginal by a multiple of the
//! compression residual `rho = zc - z0`:
//!
//! ```text
//! z_n = sqrt(ab_n) z0 + sqrt(1 - ab_n) (gamma_n rho + eps_n),   1 <= n <= N_r
//! ```
//!
//! `gamma_n` is chosen so that at the endpoint `n = N_r` the mean reduces to
//! `sqrt(ab_{N_r}) zc`, which lets denoising start from the compressed latent
//! instead of pure noise. Reverse steps take the form
//! `z_prev = iota z_n + zeta z0_hat + sigma eps`.
//!
//! Only `eta = 0` (deterministic) and `eta = 1` (stochastic) are supported:
//! the residual scaling `gamma_n` is only defined for those two settings.

use std::collections::VecDeque;

use rand::Rng;

use crate::denoiser::{Denoiser, StepContext};
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::schedule::Schedule;

/// Denominators smaller than this are treated as the `n = N_r` singularity
/// in `recover_z0`.
pub const SINGULARITY_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Deterministic,
    Stochastic,
}

impl Sampling {
    pub fn from_eta(eta: f64) -> Result<Self> {
        if eta == 0.0 {
            Ok(Sampling::Deterministic)
        } else if eta == 1.0 {
            Ok(Sampling::Stochastic)
        } else {
            Err(Error::UnsupportedEta(eta))
        }
    }

    pub fn eta(self) -> f64 {
        match self {
            Sampling::Deterministic => 0.0,
            Sampling::Stochastic => 1.0,
        }
    }
}

/// Clean latent, compressed latent and their residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    z0: Latent,
    zc: Latent,
    rho: Latent,
}

impl ResidualPair {
    pub fn new(z0: Latent, zc: Latent) -> Result<Self> {
        let rho = zc.sub(&z0)?;
        Ok(Self { z0, zc, rho })
    }

    pub fn z0(&self) -> &Latent {
        &self.z0
    }

    pub fn zc(&self) -> &Latent {
        &self.zc
    }

    pub fn residual(&self) -> &Latent {
        &self.rho
    }
}

/// Reverse-step coefficients for a jump `n -> prev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerCoeffs {
    pub n: usize,
    pub prev: usize,
    pub iota: f64,
    pub zeta: f64,
    pub gamma_n: f64,
    pub gamma_prev: f64,
    pub sigma: f64,
    pub eta: f64,
    pub n_r: usize,
}

impl SamplerCoeffs {
    /// Residuals of the three consistency equations the coefficients must
    /// satisfy (mean on z0, variance, residual scaling).
    pub fn system_residuals(&self, s: &Schedule) -> Result<[f64; 3]> {
        let a = s.alpha_bar(self.n)?;
        let a_prev = s.alpha_bar(self.prev)?;
        Ok([
            self.iota * a.sqrt() + self.zeta - a_prev.sqrt(),
            self.iota * self.iota * (1.0 - a) + self.sigma * self.sigma - (1.0 - a_prev),
            (1.0 - a_prev).sqrt() * self.gamma_prev
                - self.iota * self.gamma_n * (1.0 - a).sqrt(),
        ])
    }
}

fn check_endpoint(s: &Schedule, n: usize, n_r: usize) -> Result<()> {
    s.check_step(n_r)?;
    if n > n_r {
        return Err(Error::StepOutOfRange { step: n, max: n_r });
    }
    Ok(())
}

/// Residual scaling `gamma_n` for endpoint `n_r`. Defined for `0 <= n <= n_r`.
pub fn gamma(s: &Schedule, n_r: usize, n: usize, eta: f64) -> Result<f64> {
    let mode = Sampling::from_eta(eta)?;
    check_endpoint(s, n, n_r)?;
    let a_r = s.alpha_bar(n_r)?;
    Ok(match mode {
        Sampling::Deterministic => a_r.sqrt() / (1.0 - a_r).sqrt(),
        Sampling::Stochastic => {
            let a = s.alpha_bar(n)?;
            (1.0 - a).sqrt() / a.sqrt() * (a_r / (1.0 - a_r))
        }
    })
}

/// Coefficients of `z_n` on `(z0, zc, eps)` under the forward process.
pub fn forward_coefficients(s: &Schedule, n: usize, n_r: usize, eta: f64) -> Result<(f64, f64, f64)> {
    let a = s.alpha_bar(n)?;
    let g = gamma(s, n_r, n, eta)?;
    let b = (1.0 - a).sqrt();
    Ok((a.sqrt() - b * g, b * g, b))
}

pub fn forward_sample(
    pair: &ResidualPair,
    n: usize,
    n_r: usize,
    s: &Schedule,
    eta: f64,
    noise: &Latent,
) -> Result<Latent> {
    s.check_step(n)?;
    check_endpoint(s, n, n_r)?;
    pair.z0.ensure_same_shape(noise)?;
    let a = s.alpha_bar(n)?;
    let g = gamma(s, n_r, n, eta)?;
    let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
    let data = pair
        .z0
        .data()
        .iter()
        .zip(pair.rho.data())
        .zip(noise.data())
        .map(|((z0, rho), e)| sa * z0 + sb * (g * rho + e))
        .collect();
    Latent::new(pair.z0.shape().to_vec(), data)?.ensure_finite("forward sample")
}

/// Denoising start point `sqrt(ab_{N_r}) zc + sqrt(1 - ab_{N_r}) eps`.
pub fn endpoint_sample(zc: &Latent, n_r: usize, s: &Schedule, noise: &Latent) -> Result<Latent> {
    s.check_step(n_r)?;
    let a = s.alpha_bar(n_r)?;
    zc.lincomb(a.sqrt(), noise, (1.0 - a).sqrt())?
        .ensure_finite("endpoint sample")
}

pub fn reverse_coeffs(s: &Schedule, n: usize, n_r: usize, eta: f64) -> Result<SamplerCoeffs> {
    s.check_step(n)?;
    reverse_coeffs_between(s, n, n - 1, n_r, eta)
}

/// Coefficients for an arbitrary jump `n -> prev` (`prev < n`), as used by
/// few-step samplers. `prev = 0` is the final jump.
pub fn reverse_coeffs_between(
    s: &Schedule,
    n: usize,
    prev: usize,
    n_r: usize,
    eta: f64,
) -> Result<SamplerCoeffs> {
    let mode = Sampling::from_eta(eta)?;
    s.check_step(n)?;
    check_endpoint(s, n, n_r)?;
    if prev >= n {
        return Err(Error::InvalidStepList(format!("jump {n} -> {prev} is not decreasing")));
    }
    let a = s.alpha_bar(n)?;
    let a_prev = s.alpha_bar(prev)?;
    let iota = match mode {
        Sampling::Deterministic => (1.0 - a_prev).sqrt() / (1.0 - a).sqrt(),
        Sampling::Stochastic => (1.0 - a_prev) / (1.0 - a) * a.sqrt() / a_prev.sqrt(),
    };
    Ok(SamplerCoeffs {
        n,
        prev,
        iota,
        zeta: a_prev.sqrt() - a.sqrt() * iota,
        gamma_n: gamma(s, n_r, n, eta)?,
        gamma_prev: gamma(s, n_r, prev, eta)?,
        sigma: s.sigma_between(n, prev, eta)?,
        eta,
        n_r,
    })
}

/// Inverts the forward process for `z0` given a noise estimate.
///
/// Returns `zc` at the endpoint, where the z0 coefficient vanishes.
pub fn recover_z0(
    z_n: &Latent,
    eps_hat: &Latent,
    zc: &Latent,
    n: usize,
    n_r: usize,
    s: &Schedule,
    eta: f64,
) -> Result<Latent> {
    z_n.ensure_same_shape(eps_hat)?;
    z_n.ensure_same_shape(zc)?;
    s.check_step(n)?;
    check_endpoint(s, n, n_r)?;
    let (c0, _, b) = forward_coefficients(s, n, n_r, eta)?;
    if n == n_r || c0.abs() < SINGULARITY_GUARD {
        return Ok(zc.clone());
    }
    let g = gamma(s, n_r, n, eta)?;
    let data = z_n
        .data()
        .iter()
        .zip(eps_hat.data())
        .zip(zc.data())
        .map(|((z, e), c)| (z - b * (g * c + e)) / c0)
        .collect();
    Latent::new(z_n.shape().to_vec(), data)
}

fn omega_sq(zeta: f64, a: f64, g: f64) -> f64 {
    let denom = a.sqrt() - (1.0 - a).sqrt() * g;
    let w = zeta * (1.0 - a).sqrt() / denom;
    w * w
}

/// Per-step training weight `omega_n^2`; zero at the endpoint.
pub fn loss_weight(s: &Schedule, n: usize, n_r: usize, eta: f64) -> Result<f64> {
    let c = reverse_coeffs(s, n, n_r, eta)?;
    let (c0, _, _) = forward_coefficients(s, n, n_r, eta)?;
    if n == n_r || c0.abs() < SINGULARITY_GUARD {
        return Ok(0.0);
    }
    Ok(omega_sq(c.zeta, s.alpha_bar(n)?, c.gamma_n))
}

/// `k` steps evenly spaced in index space, starting at `n_r`. The final
/// jump to 0 is implicit in the sampler.
pub fn step_list(n_r: usize, k: usize) -> Result<Vec<usize>> {
    if n_r == 0 || k == 0 {
        return Err(Error::InvalidStepList(format!("need n_r >= 1 and k >= 1 (got {n_r}, {k})")));
    }
    let k = k.min(n_r);
    let mut steps: Vec<usize> = (0..k)
        .map(|i| ((n_r as f64) * ((k - i) as f64) / k as f64).round() as usize)
        .map(|n| n.max(1))
        .collect();
    steps.dedup();
    Ok(steps)
}

pub fn validate_step_list(steps: &[usize], n_r: usize) -> Result<()> {
    match steps.first() {
        None => return Err(Error::InvalidStepList("empty".into())),
        Some(first) if *first != n_r => {
            return Err(Error::InvalidStepList(format!(
                "first step {first} must equal N_r = {n_r}"
            )))
        }
        _ => {}
    }
    if steps.windows(2).any(|w| w[1] >= w[0]) || steps.contains(&0) {
        return Err(Error::InvalidStepList(format!(
            "{steps:?} is not strictly decreasing within 1..=N_r"
        )));
    }
    Ok(())
}

pub trait NoiseSource {
    fn next_noise(&mut self, shape: &[usize]) -> Result<Latent>;
}

/// Standard normal draws from an RNG.
pub struct GaussianNoise<R>(pub R);

impl<R: Rng> NoiseSource for GaussianNoise<R> {
    fn next_noise(&mut self, shape: &[usize]) -> Result<Latent> {
        Ok(Latent::standard_normal(shape, &mut self.0))
    }
}

/// Replays a fixed sequence of noise tensors.
#[derive(Debug, Clone, Default)]
pub struct RecordedNoise {
    queue: VecDeque<Latent>,
}

impl RecordedNoise {
    pub fn new(noises: impl IntoIterator<Item = Latent>) -> Self {
        Self {
            queue: noises.into_iter().collect(),
        }
    }
}

impl NoiseSource for RecordedNoise {
    fn next_noise(&mut self, shape: &[usize]) -> Result<Latent> {
        let n = self
            .queue
            .pop_front()
            .ok_or_else(|| Error::InvalidRange("recorded noise exhausted".into()))?;
        if n.shape() != shape {
            return Err(Error::ShapeMismatch(n.shape().to_vec(), shape.to_vec()));
        }
        Ok(n)
    }
}

/// Wraps a source and keeps a copy of everything it hands out.
pub struct RecordingNoise<S> {
    inner: S,
    pub drawn: Vec<Latent>,
}

impl<S> RecordingNoise<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            drawn: Vec::new(),
        }
    }
}

impl<S: NoiseSource> NoiseSource for RecordingNoise<S> {
    fn next_noise(&mut self, shape: &[usize]) -> Result<Latent> {
        let n = self.inner.next_noise(shape)?;
        self.drawn.push(n.clone());
        Ok(n)
    }
}

/// One sampler step from `z_n`, given the current z0 estimate.
fn reverse_step(
    c: &SamplerCoeffs,
    z_n: &Latent,
    z0_hat: &Latent,
    noise: &mut dyn NoiseSource,
) -> Result<Latent> {
    let mut next = z_n.lincomb(c.iota, z0_hat, c.zeta)?;
    if c.sigma != 0.0 {
        let e = noise.next_noise(z_n.shape())?;
        next = next.lincomb(1.0, &e, c.sigma)?;
    }
    Ok(next)
}

/// Runs the reverse process from `N_r` down to 0.
///
/// The first noise draw is the endpoint noise; later draws happen only for
/// steps with nonzero `sigma`, so with `eta = 0` the result depends only on
/// `zc` and that first draw.
pub fn sample(
    denoiser: &dyn Denoiser,
    zc: &Latent,
    n_r: usize,
    steps: &[usize],
    eta: f64,
    s: &Schedule,
    noise: &mut dyn NoiseSource,
) -> Result<Latent> {
    Sampling::from_eta(eta)?;
    s.check_step(n_r)?;
    validate_step_list(steps, n_r)?;
    let eps = noise.next_noise(zc.shape())?;
    let mut z = endpoint_sample(zc, n_r, s, &eps)?;
    for (i, &n) in steps.iter().enumerate() {
        let prev = steps.get(i + 1).copied().unwrap_or(0);
        let z0_hat = if n == n_r {
            zc.clone()
        } else {
            let ctx = StepContext {
                n,
                n_r,
                eta,
                schedule: s,
            };
            let eps_hat = denoiser.predict(&ctx, &z, zc)?;
            recover_z0(&z, &eps_hat, zc, n, n_r, s, eta)?
        };
        let c = reverse_coeffs_between(s, n, prev, n_r, eta)?;
        z = reverse_step(&c, &z, &z0_hat, noise)?.ensure_finite("sampler state")?;
    }
    Ok(z)
}
