//! Discrete noise schedules.
//!
//! A schedule stores `betas[i]` for steps `1..=T` and the cumulative signal
//! retention `alpha_bars[n] = prod_{i<=n} (1 - beta_i)`, with `alpha_bars[0] = 1`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    Linear,
    ScaledLinear,
    Cosine,
}

impl ScheduleKind {
    /// One-byte identifier used in the container header.
    pub fn id(self) -> u8 {
        match self {
            ScheduleKind::Constant => 0,
            ScheduleKind::Linear => 1,
            ScheduleKind::ScaledLinear => 2,
            ScheduleKind::Cosine => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Some(match id {
            0 => ScheduleKind::Constant,
            1 => ScheduleKind::Linear,
            2 => ScheduleKind::ScaledLinear,
            3 => ScheduleKind::Cosine,
            _ => return None,
        })
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Linear => "linear",
            ScheduleKind::ScaledLinear => "scaled-linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "constant" => Ok(ScheduleKind::Constant),
            "linear" => Ok(ScheduleKind::Linear),
            "scaled-linear" | "scaled_linear" => Ok(ScheduleKind::ScaledLinear),
            "cosine" | "squaredcos_cap_v2" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Config(format!("unknown schedule kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    /// The latent-diffusion convention (scaled-linear, 1000 steps,
    /// beta in [0.00085, 0.012]). This is an external convention, not
    /// something derived here.
    fn default() -> Self {
        Self {
            kind: ScheduleKind::ScaledLinear,
            steps: 1000,
            beta_start: 0.00085,
            beta_end: 0.012,
        }
    }
}

const COSINE_OFFSET: f64 = 0.008;
const COSINE_MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Schedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            kind,
            steps,
            beta_start,
            beta_end,
        } = config;
        if steps == 0 {
            return Err(Error::InvalidRange("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidRange(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let t = steps as f64;
        // Fraction along the schedule for step i in 0..steps.
        let frac = |i: usize| if steps == 1 { 0.0 } else { i as f64 / (t - 1.0) };
        let betas: Vec<f64> = match kind {
            ScheduleKind::Constant => vec![beta_start; steps],
            ScheduleKind::Linear => (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * frac(i))
                .collect(),
            ScheduleKind::ScaledLinear => {
                let (lo, hi) = (beta_start.sqrt(), beta_end.sqrt());
                (0..steps)
                    .map(|i| {
                        let r = lo + (hi - lo) * frac(i);
                        r * r
                    })
                    .collect()
            }
            ScheduleKind::Cosine => {
                let f = |x: f64| {
                    let v = ((x / t + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
                        * std::f64::consts::FRAC_PI_2)
                        .cos();
                    v * v
                };
                (1..=steps)
                    .map(|i| (1.0 - f(i as f64) / f((i - 1) as f64)).clamp(1e-12, COSINE_MAX_BETA))
                    .collect()
            }
        };
        Self::from_betas(kind, betas)
    }

    /// Builds a schedule from explicit betas (`betas[0]` is step 1).
    pub fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidRange("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidRange(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        if alpha_bars.windows(2).any(|w| w[1] >= w[0]) || acc <= 0.0 {
            return Err(Error::InvalidRange(
                "cumulative product is not strictly decreasing".into(),
            ));
        }
        Ok(Self {
            kind,
            betas,
            alpha_bars,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Total number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `beta_n` for `1 <= n <= T`.
    pub fn beta(&self, n: usize) -> Result<f64> {
        self.check_step(n)?;
        Ok(self.betas[n - 1])
    }

    /// Cumulative product at step `n` for `0 <= n <= T`.
    pub fn alpha_bar(&self, n: usize) -> Result<f64> {
        self.alpha_bars
            .get(n)
            .copied()
            .ok_or(Error::StepOutOfRange {
                step: n,
                max: self.steps(),
            })
    }

    pub(crate) fn check_step(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.steps() {
            Err(Error::StepOutOfRange {
                step: n,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    /// Per-step reverse noise magnitude for the consecutive jump `n -> n-1`.
    pub fn sigma(&self, n: usize, eta: f64) -> Result<f64> {
        self.check_step(n)?;
        self.sigma_between(n, n - 1, eta)
    }

    /// Reverse noise magnitude for a jump `from -> to` (`to < from`), which
    /// is what few-step samplers use.
    pub fn sigma_between(&self, from: usize, to: usize, eta: f64) -> Result<f64> {
        self.check_step(from)?;
        if to >= from {
            return Err(Error::InvalidStepList(format!("jump {from} -> {to} is not decreasing")));
        }
        if !(eta >= 0.0) {
            return Err(Error::InvalidRange(format!("eta must be >= 0, got {eta}")));
        }
        let a = self.alpha_bars[from];
        let a_prev = self.alpha_bars[to];
        Ok(eta * ((1.0 - a_prev) / (1.0 - a)).sqrt() * (1.0 - a / a_prev).sqrt())
    }

    /// CSV rows `n,beta,alpha_bar`; row 0 carries an empty beta.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,beta,alpha_bar\n");
        out.push_str(&format!("0,,{:.17e}\n", self.alpha_bars[0]));
        for n in 1..=self.steps() {
            out.push_str(&format!(
                "{n},{:.17e},{:.17e}\n",
                self.betas[n - 1],
                self.alpha_bars[n]
            ));
        }
        out
    }
}
