//! Exact posterior-mean denoiser for a Gaussian latent world.
//!
//! Model: `z0 ~ N(mu, s0^2 I)`, `zc = z0 + q` with `q ~ N(0, sq^2 I)`, and
//! `z_n` from the residual forward process. Writing
//! `z_n = c z0 + b gamma zc + b eps` (with `c = sqrt(ab) - b gamma`,
//! `b = sqrt(1 - ab)`), the quantity `u = z_n - b gamma zc` is a second
//! independent noisy observation of `z0`, so `E[z0 | z_n, zc]` is a
//! precision-weighted average of the prior mean, `zc` and `u / c`.

use super::{Denoiser, StepContext};
use crate::diffusion::gamma;
use crate::error::{Error, Result};
use crate::latent::Latent;

/// How the denoiser models the quantization noise variance `sq^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantNoise {
    Fixed(f64),
    /// `sq^2 = (1 - ab_{N_r}) / ab_{N_r}`: the compression noise is assumed
    /// to match the noise level of the endpoint, i.e. `N_r` encodes the
    /// compression level.
    EndpointMatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDenoiser {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub quant_noise: QuantNoise,
}

/// `E[z0 | z_n, zc] = on_zn * z_n + on_zc * zc + constant`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoeffs {
    pub on_zn: f64,
    pub on_zc: f64,
    pub constant: f64,
}

impl GaussianDenoiser {
    pub fn new(prior_mean: f64, prior_var: f64, quant_noise: QuantNoise) -> Result<Self> {
        if !(prior_var > 0.0) || !prior_mean.is_finite() {
            return Err(Error::InvalidRange(format!(
                "prior must have finite mean and positive variance (got {prior_mean}, {prior_var})"
            )));
        }
        if let QuantNoise::Fixed(v) = quant_noise {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidRange(format!("quantization variance {v}")));
            }
        }
        Ok(Self {
            prior_mean,
            prior_var,
            quant_noise,
        })
    }

    pub fn quant_var(&self, ctx: &StepContext<'_>) -> Result<f64> {
        Ok(match self.quant_noise {
            QuantNoise::Fixed(v) => v,
            QuantNoise::EndpointMatched => {
                let a = ctx.schedule.alpha_bar(ctx.n_r)?;
                (1.0 - a) / a
            }
        })
    }

    pub fn posterior_coefficients(&self, ctx: &StepContext<'_>) -> Result<PosteriorCoeffs> {
        let sq = self.quant_var(ctx)?;
        if sq == 0.0 {
            return Ok(PosteriorCoeffs {
                on_zn: 0.0,
                on_zc: 1.0,
                constant: 0.0,
            });
        }
        let a = ctx.schedule.alpha_bar(ctx.n)?;
        let g = gamma(ctx.schedule, ctx.n_r, ctx.n, ctx.eta)?;
        let b = (1.0 - a).sqrt();
        let c = a.sqrt() - b * g;
        let precision = 1.0 / self.prior_var + 1.0 / sq + c * c / (b * b);
        Ok(PosteriorCoeffs {
            on_zn: c / (b * b) / precision,
            on_zc: (1.0 / sq - c * g / b) / precision,
            constant: self.prior_mean / self.prior_var / precision,
        })
    }

    /// Posterior mean of `z0`.
    pub fn estimate_z0(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent> {
        let k = self.posterior_coefficients(ctx)?;
        z_n.lincomb(k.on_zn, zc, k.on_zc).map(|l| l.map(|v| v + k.constant))
    }

    pub(super) fn to_sections(&self) -> Vec<Vec<f64>> {
        let (mode, v) = match self.quant_noise {
            QuantNoise::Fixed(v) => (0.0, v),
            QuantNoise::EndpointMatched => (1.0, 0.0),
        };
        vec![vec![self.prior_mean, self.prior_var, mode, v]]
    }

    pub(super) fn from_sections(sections: &[Vec<f64>]) -> Result<Self> {
        match sections {
            [s] if s.len() == 4 => {
                let quant_noise = match s[2] {
                    m if m == 0.0 => QuantNoise::Fixed(s[3]),
                    m if m == 1.0 => QuantNoise::EndpointMatched,
                    m => return Err(Error::Corrupt(format!("quant-noise mode {m}"))),
                };
                Self::new(s[0], s[1], quant_noise)
            }
            _ => Err(Error::Corrupt("gaussian denoiser expects one 4-value section".into())),
        }
    }
}

impl Denoiser for GaussianDenoiser {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent> {
        z_n.ensure_same_shape(zc)?;
        let z0 = self.estimate_z0(ctx, z_n, zc)?;
        let a = ctx.schedule.alpha_bar(ctx.n)?;
        let g = gamma(ctx.schedule, ctx.n_r, ctx.n, ctx.eta)?;
        let b = (1.0 - a).sqrt();
        let c = a.sqrt() - b * g;
        // Invert z_n = c z0 + b (gamma zc + eps) for eps.
        let data = z_n
            .data()
            .iter()
            .zip(z0.data())
            .zip(zc.data())
            .map(|((zn, z0), zc)| (zn - c * z0) / b - g * zc)
            .collect();
        Latent::new(z_n.shape().to_vec(), data)?.ensure_finite("gaussian prediction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{forward_sample, recover_z0, ResidualPair};
    use crate::schedule::{Schedule, ScheduleConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ctx(s: &Schedule, n: usize, n_r: usize) -> StepContext<'_> {
        StepContext {
            n,
            n_r,
            eta: 0.0,
            schedule: s,
        }
    }

    #[test]
    fn exact_observation_returns_zc() {
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let d = GaussianDenoiser::new(0.0, 1.0, QuantNoise::Fixed(0.0)).unwrap();
        let c = ctx(&s, 150, 400);
        let zc = Latent::from_vec(vec![0.3, -0.7]);
        let zn = Latent::from_vec(vec![1.1, 0.2]);
        let eps = d.predict(&c, &zn, &zc).unwrap();
        let z0 = recover_z0(&zn, &eps, &zc, 150, 400, &s, 0.0).unwrap();
        assert!(z0.max_abs_diff(&zc).unwrap() < 1e-12);
    }

    #[test]
    fn beats_naive_predictor() {
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let (mu, s0, sq) = (0.5, 1.0, 0.3);
        let d = GaussianDenoiser::new(mu, s0, QuantNoise::Fixed(sq)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let prior = Normal::new(mu, s0.sqrt()).unwrap();
        let qn = Normal::new(0.0, sq.sqrt()).unwrap();
        let (n, n_r) = (120, 300);
        let count = 100_000;
        let z0: Vec<f64> = (0..count).map(|_| prior.sample(&mut rng)).collect();
        let zc: Vec<f64> = z0.iter().map(|z| z + qn.sample(&mut rng)).collect();
        let pair = ResidualPair::new(Latent::from_vec(z0), Latent::from_vec(zc)).unwrap();
        let eps = Latent::standard_normal(&[count], &mut rng);
        let zn = forward_sample(&pair, n, n_r, &s, 0.0, &eps).unwrap();
        let c = ctx(&s, n, n_r);
        let eps_hat = d.predict(&c, &zn, pair.zc()).unwrap();
        let z0_hat = recover_z0(&zn, &eps_hat, pair.zc(), n, n_r, &s, 0.0).unwrap();
        let mse = z0_hat.mse(pair.z0()).unwrap();
        let naive = pair.zc().mse(pair.z0()).unwrap();
        assert!(mse <= naive, "{mse} vs {naive}");
    }

    #[test]
    fn blob_sections_round_trip() {
        for q in [QuantNoise::Fixed(0.25), QuantNoise::EndpointMatched] {
            let d = GaussianDenoiser::new(-0.1, 2.0, q).unwrap();
            assert_eq!(GaussianDenoiser::from_sections(&d.to_sections()).unwrap(), d);
        }
        assert!(GaussianDenoiser::new(0.0, 0.0, QuantNoise::Fixed(0.1)).is_err());
    }
}
