//! Gaussian KL divergences used as per-step rate proxies.

use crate::error::{Error, Result};
use crate::schedule::Schedule;

/// Isotropic Gaussian `N(mean, var I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

/// `KL(p || q)` in nats for `dim` independent coordinates.
pub fn kl_rate_gaussian(p: Gaussian, q: Gaussian, dim: usize) -> Result<f64> {
    if !(p.var > 0.0 && q.var > 0.0) {
        return Err(Error::InvalidRange(format!("variances must be positive ({}, {})", p.var, q.var)));
    }
    let d = p.mean - q.mean;
    Ok(0.5 * ((q.var / p.var).ln() + (p.var + d * d) / q.var - 1.0) * dim as f64)
}

/// Expected per-dimension KL between the true reverse posterior
/// `q(z_{n-1} | z_n, z0)` and the model posterior that plugs in the
/// Bayes-optimal `E[z0 | z_n]`, for `z0 ~ N(0, prior_var)` under the plain
/// forward process. Both posteriors share the variance, and the KL is
/// quadratic in the mean gap, so the expectation reduces to one closed-form
/// KL with the root-mean-square gap.
pub fn gaussian_step_kl(s: &Schedule, n: usize, prior_var: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidRange(format!("step KL needs n >= 2, got {n}")));
    }
    let a = s.alpha_bar(n)?;
    let a_prev = s.alpha_bar(n - 1)?;
    let beta = s.beta(n)?;
    let coef = a_prev.sqrt() * beta / (1.0 - a);
    let post_var = (1.0 - a_prev) / (1.0 - a) * beta;
    let z0_var = prior_var * (1.0 - a) / (a * prior_var + 1.0 - a);
    let gap = (coef * coef * z0_var).sqrt();
    kl_rate_gaussian(
        Gaussian { mean: 0.0, var: post_var },
        Gaussian { mean: gap, var: post_var },
        1,
    )
}
