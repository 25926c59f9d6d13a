//! Small fully connected noise predictor with hand-written backprop.
//!
//! The network is applied independently to every `latent_dim`-sized chunk
//! of a latent: input is `[z_n chunk, zc chunk, step embedding, condition]`,
//! two tanh hidden layers, linear output of `latent_dim` values.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{as_count, Denoiser, StepContext};
use crate::diffusion::{forward_coefficients, forward_sample, gamma, loss_weight, step_list, ResidualPair};
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::schedule::Schedule;

const EMBED_MAX_PERIOD: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    latent_dim: usize,
    emb_dim: usize,
    cond: Vec<f64>,
    hidden: [usize; 2],
    // Row-major (out x in) weights.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: Vec<f64>,
}

/// Gradient in the flat order of [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Rate weight. Carried for completeness: the stand-in quantizer has no
    /// learned rate, so it does not enter the denoiser loss.
    pub lambda_r: f64,
    pub lambda_d: f64,
    /// Perceptual weight; must be 0.
    pub lambda_p: f64,
    pub use_omega_weights: bool,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch: usize,
    /// Number of sampler steps; training draws `n` uniformly from that list.
    pub sampling_steps: usize,
    pub eta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_r: 0.0,
            lambda_d: 0.0,
            lambda_p: 0.0,
            use_omega_weights: false,
            learning_rate: 0.05,
            steps: 500,
            batch: 16,
            sampling_steps: 20,
            eta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_p != 0.0 {
            return Err(Error::Config(format!(
                "lambda_p = {} but the perceptual term is not available",
                self.lambda_p
            )));
        }
        if !(self.lambda_d >= 0.0) || !self.lambda_d.is_finite() {
            return Err(Error::Config(format!("lambda_d = {}", self.lambda_d)));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate = {}", self.learning_rate)));
        }
        if self.batch == 0 || self.sampling_steps == 0 {
            return Err(Error::Config("batch and sampling_steps must be >= 1".into()));
        }
        crate::diffusion::Sampling::from_eta(self.eta)?;
        Ok(())
    }
}

/// One fully specified training sample.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub z0: Latent,
    pub zc: Latent,
    pub eps: Latent,
    pub n: usize,
}

impl TrainExample {
    /// Draws `eps` and builds `z_n` on the fly in [`Mlp::batch_loss_and_grad`].
    pub fn draw<R: Rng + ?Sized>(pair: &ResidualPair, n: usize, rng: &mut R) -> Self {
        Self {
            z0: pair.z0().clone(),
            zc: pair.zc().clone(),
            eps: Latent::standard_normal(pair.z0().shape(), rng),
            n,
        }
    }
}

struct Trace {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

fn matvec(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

/// Accumulates `dW += d (x) inp`, `db += d` and returns `W^T d`.
fn backprop_layer(w: &[f64], inp: &[f64], d: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
    let cols = inp.len();
    let mut dx = vec![0.0; cols];
    for (r, dr) in d.iter().enumerate() {
        gb[r] += dr;
        let row = &w[r * cols..(r + 1) * cols];
        let grow = &mut gw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] += dr * inp[c];
            dx[c] += dr * row[c];
        }
    }
    dx
}

impl Mlp {
    /// Weights drawn `N(0, 1/fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(
        latent_dim: usize,
        emb_dim: usize,
        cond: Vec<f64>,
        hidden: [usize; 2],
        rng: &mut R,
    ) -> Result<Self> {
        if latent_dim == 0 || hidden.contains(&0) || emb_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "mlp needs latent_dim >= 1, nonzero hidden widths and an even embedding size \
                 (got {latent_dim}, {hidden:?}, {emb_dim})"
            )));
        }
        if cond.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp condition vector".into()));
        }
        let input = 2 * latent_dim + emb_dim + cond.len();
        let mut init = |rows: usize, cols: usize| -> Vec<f64> {
            let scale = 1.0 / (cols as f64).sqrt();
            (0..rows * cols)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    scale * v
                })
                .collect()
        };
        let w1 = init(hidden[0], input);
        let w2 = init(hidden[1], hidden[0]);
        let w3 = init(latent_dim, hidden[1]);
        Ok(Self {
            latent_dim,
            emb_dim,
            cond,
            hidden,
            w1,
            b1: vec![0.0; hidden[0]],
            w2,
            b2: vec![0.0; hidden[1]],
            w3,
            b3: vec![0.0; latent_dim],
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn condition(&self) -> &[f64] {
        &self.cond
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
            .into_iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::ShapeMismatch(vec![p.len()], vec![self.num_params()]));
        }
        let mut rest = p;
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3] {
            let (head, tail) = rest.split_at(v.len());
            v.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Sinusoidal embedding of the integer step.
    pub fn step_embedding(&self, n: usize) -> Vec<f64> {
        let half = self.emb_dim / 2;
        let mut e = Vec::with_capacity(self.emb_dim);
        for i in 0..half {
            let freq = EMBED_MAX_PERIOD.powf(-(i as f64) / half as f64);
            let arg = n as f64 * freq;
            e.push(arg.sin());
            e.push(arg.cos());
        }
        e
    }

    fn forward(&self, zn: &[f64], zc: &[f64], emb: &[f64], cond: &[f64]) -> Trace {
        let mut x = Vec::with_capacity(2 * zn.len() + emb.len() + cond.len());
        x.extend_from_slice(zn);
        x.extend_from_slice(zc);
        x.extend_from_slice(emb);
        x.extend_from_slice(cond);
        let h1: Vec<f64> = matvec(&self.w1, &self.b1, &x).into_iter().map(f64::tanh).collect();
        let h2: Vec<f64> = matvec(&self.w2, &self.b2, &h1).into_iter().map(f64::tanh).collect();
        let out = matvec(&self.w3, &self.b3, &h2);
        Trace { x, h1, h2, out }
    }

    /// Accumulates parameter gradients for output gradient `dout`; returns
    /// the gradient with respect to the network input.
    fn backward(&self, t: &Trace, dout: &[f64], g: &mut [f64]) -> Vec<f64> {
        let (gw1, rest) = g.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, rest) = rest.split_at_mut(self.w2.len());
        let (gb2, rest) = rest.split_at_mut(self.b2.len());
        let (gw3, gb3) = rest.split_at_mut(self.w3.len());
        let dh2 = backprop_layer(&self.w3, &t.h2, dout, gw3, gb3);
        let da2: Vec<f64> = dh2.iter().zip(&t.h2).map(|(d, h)| d * (1.0 - h * h)).collect();
        let dh1 = backprop_layer(&self.w2, &t.h1, &da2, gw2, gb2);
        let da1: Vec<f64> = dh1.iter().zip(&t.h1).map(|(d, h)| d * (1.0 - h * h)).collect();
        backprop_layer(&self.w1, &t.x, &da1, gw1, gb1)
    }

    fn check_latent(&self, z: &Latent) -> Result<()> {
        if z.len() % self.latent_dim != 0 {
            return Err(Error::ShapeMismatch(z.shape().to_vec(), vec![self.latent_dim]));
        }
        Ok(())
    }

    /// Noise prediction with an explicit condition vector.
    pub fn predict_with_condition(&self, n: usize, z_n: &Latent, zc: &Latent, cond: &[f64]) -> Result<Latent> {
        z_n.ensure_same_shape(zc)?;
        self.check_latent(z_n)?;
        if cond.len() != self.cond.len() {
            return Err(Error::ShapeMismatch(vec![cond.len()], vec![self.cond.len()]));
        }
        let emb = self.step_embedding(n);
        let d = self.latent_dim;
        let mut out = Vec::with_capacity(z_n.len());
        for (a, b) in z_n.data().chunks(d).zip(zc.data().chunks(d)) {
            out.extend(self.forward(a, b, &emb, cond).out);
        }
        Latent::new(z_n.shape().to_vec(), out)?.ensure_finite("mlp prediction")
    }

    /// `mean((eps_hat - eps)^2)` under condition `cond`, and its gradient
    /// with respect to `cond`.
    pub fn eps_loss_cond_grad(
        &self,
        n: usize,
        z_n: &Latent,
        zc: &Latent,
        eps: &Latent,
        cond: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        z_n.ensure_same_shape(zc)?;
        z_n.ensure_same_shape(eps)?;
        self.check_latent(z_n)?;
        if cond.len() != self.cond.len() {
            return Err(Error::ShapeMismatch(vec![cond.len()], vec![self.cond.len()]));
        }
        let emb = self.step_embedding(n);
        let d = self.latent_dim;
        let scale = 1.0 / z_n.len().max(1) as f64;
        let mut scratch = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        let mut gcond = vec![0.0; cond.len()];
        let offset = 2 * d + self.emb_dim;
        for ((a, b), e) in z_n.data().chunks(d).zip(zc.data().chunks(d)).zip(eps.data().chunks(d)) {
            let t = self.forward(a, b, &emb, cond);
            let dout: Vec<f64> = t.out.iter().zip(e).map(|(o, e)| 2.0 * (o - e) * scale).collect();
            loss += t.out.iter().zip(e).map(|(o, e)| (o - e) * (o - e)).sum::<f64>() * scale;
            let dx = self.backward(&t, &dout, &mut scratch);
            for (g, v) in gcond.iter_mut().zip(&dx[offset..]) {
                *g += v;
            }
        }
        Ok((loss, gcond))
    }

    /// Mean over examples of `w * (mse(eps_hat, eps) + lambda_d * mse(z0_hat, z0))`
    /// with `w = omega^2` when enabled, else 1.
    pub fn batch_loss_and_grad(
        &self,
        examples: &[TrainExample],
        s: &Schedule,
        n_r: usize,
        cfg: &TrainConfig,
    ) -> Result<(f64, MlpGrad)> {
        if examples.is_empty() {
            return Err(Error::Config("empty training batch".into()));
        }
        let mut grad = vec![0.0; self.num_params()];
        let mut total = 0.0;
        let d = self.latent_dim;
        let nb = examples.len() as f64;
        for ex in examples {
            ex.z0.ensure_same_shape(&ex.zc)?;
            ex.z0.ensure_same_shape(&ex.eps)?;
            self.check_latent(&ex.z0)?;
            let pair = ResidualPair::new(ex.z0.clone(), ex.zc.clone())?;
            let z_n = forward_sample(&pair, ex.n, n_r, s, cfg.eta, &ex.eps)?;
            let weight = if cfg.use_omega_weights {
                loss_weight(s, ex.n, n_r, cfg.eta)?
            } else {
                1.0
            };
            let (c0, _, b) = forward_coefficients(s, ex.n, n_r, cfg.eta)?;
            let g = gamma(s, n_r, ex.n, cfg.eta)?;
            // z0_hat = (z_n - b (g zc + eps_hat)) / c0; held at zc when c0 vanishes.
            let z0_path = cfg.lambda_d > 0.0 && ex.n != n_r && c0.abs() >= crate::diffusion::SINGULARITY_GUARD;
            let scale = weight / (ex.z0.len().max(1) as f64 * nb);
            let emb = self.step_embedding(ex.n);
            let chunks = z_n
                .data()
                .chunks(d)
                .zip(ex.zc.data().chunks(d))
                .zip(ex.eps.data().chunks(d))
                .zip(ex.z0.data().chunks(d));
            for (((zn, zc), e), z0) in chunks {
                let t = self.forward(zn, zc, &emb, &self.cond);
                let mut dout = vec![0.0; d];
                for i in 0..d {
                    let r = t.out[i] - e[i];
                    total += scale * r * r;
                    dout[i] = 2.0 * scale * r;
                    if z0_path {
                        let z0_hat = (zn[i] - b * (g * zc[i] + t.out[i])) / c0;
                        let r0 = z0_hat - z0[i];
                        total += scale * cfg.lambda_d * r0 * r0;
                        dout[i] += 2.0 * scale * cfg.lambda_d * r0 * (-b / c0);
                    } else if cfg.lambda_d > 0.0 {
                        let r0 = zc[i] - z0[i];
                        total += scale * cfg.lambda_d * r0 * r0;
                    }
                }
                if weight != 0.0 {
                    self.backward(&t, &dout, &mut grad);
                }
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        Ok((total, MlpGrad(grad)))
    }

    /// One gradient-descent step on a batch. Steps are drawn uniformly from
    /// the inference step list. Returns the loss before the update.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        pairs: &[ResidualPair],
        s: &Schedule,
        n_r: usize,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<f64> {
        cfg.validate()?;
        if pairs.is_empty() {
            return Err(Error::Config("empty training batch".into()));
        }
        let pool = step_list(n_r, cfg.sampling_steps)?;
        let examples: Vec<TrainExample> = pairs
            .iter()
            .map(|p| {
                let n = pool[rng.gen_range(0..pool.len())];
                TrainExample::draw(p, n, rng)
            })
            .collect();
        let (loss, grad) = self.batch_loss_and_grad(&examples, s, n_r, cfg)?;
        if cfg.learning_rate != 0.0 {
            let p: Vec<f64> = self
                .params()
                .iter()
                .zip(&grad.0)
                .map(|(p, g)| p - cfg.learning_rate * g)
                .collect();
            self.set_params(&p)?;
        }
        Ok(loss)
    }

    /// `cfg.steps` steps, each on `cfg.batch` pairs drawn with replacement.
    /// Returns the per-step losses.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        data: &[ResidualPair],
        s: &Schedule,
        n_r: usize,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let mut losses = Vec::with_capacity(cfg.steps);
        for _ in 0..cfg.steps {
            let batch: Vec<ResidualPair> = (0..cfg.batch)
                .map(|_| data[rng.gen_range(0..data.len())].clone())
                .collect();
            losses.push(self.train_step(&batch, s, n_r, cfg, rng)?);
        }
        Ok(losses)
    }

    pub(super) fn to_sections(&self) -> Vec<Vec<f64>> {
        vec![
            vec![
                self.latent_dim as f64,
                self.emb_dim as f64,
                self.cond.len() as f64,
                self.hidden[0] as f64,
                self.hidden[1] as f64,
            ],
            self.cond.clone(),
            self.w1.clone(),
            self.b1.clone(),
            self.w2.clone(),
            self.b2.clone(),
            self.w3.clone(),
            self.b3.clone(),
        ]
    }

    pub(super) fn from_sections(sections: &[Vec<f64>]) -> Result<Self> {
        let [head, cond, w1, b1, w2, b2, w3, b3] = sections else {
            return Err(Error::Corrupt(format!("mlp expects 8 sections, got {}", sections.len())));
        };
        let [d, e, c, h1, h2] = head.as_slice() else {
            return Err(Error::Corrupt("mlp header".into()));
        };
        let d = as_count(*d, "latent_dim")?;
        let e = as_count(*e, "emb_dim")?;
        let c = as_count(*c, "cond_dim")?;
        let h = [as_count(*h1, "hidden[0]")?, as_count(*h2, "hidden[1]")?];
        let input = 2 * d + e + c;
        let expect = [c, h[0] * input, h[0], h[1] * h[0], h[1], d * h[1], d];
        let got = [cond, w1, b1, w2, b2, w3, b3].map(|v| v.len());
        if d == 0 || e % 2 != 0 || h.contains(&0) || got != expect {
            return Err(Error::Corrupt(format!("mlp section sizes {got:?}, expected {expect:?}")));
        }
        Ok(Self {
            latent_dim: d,
            emb_dim: e,
            cond: cond.clone(),
            hidden: h,
            w1: w1.clone(),
            b1: b1.clone(),
            w2: w2.clone(),
            b2: b2.clone(),
            w3: w3.clone(),
            b3: b3.clone(),
        })
    }
}

impl Denoiser for Mlp {
    fn predict(&self, ctx: &StepContext<'_>, z_n: &Latent, zc: &Latent) -> Result<Latent> {
        self.predict_with_condition(ctx.n, z_n, zc, &self.cond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixture(count: usize, rows: usize, rng: &mut ChaCha8Rng) -> Vec<ResidualPair> {
        // Two 2-D clusters; zc is z0 on a 0.5 grid.
        (0..count)
            .map(|_| {
                let mut z0 = Vec::with_capacity(rows * 2);
                for _ in 0..rows {
                    let m = if rng.gen_bool(0.5) { 1.5 } else { -1.5 };
                    for _ in 0..2 {
                        let v: f64 = StandardNormal.sample(rng);
                        z0.push(m + 0.4 * v);
                    }
                }
                let zc = z0.iter().map(|v| (v / 0.5).round() * 0.5).collect();
                let z0 = Latent::new(vec![rows, 2], z0).unwrap();
                let zc = Latent::new(vec![rows, 2], zc).unwrap();
                ResidualPair::new(z0, zc).unwrap()
            })
            .collect()
    }

    #[test]
    fn small_net_has_74_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(2, 4, vec![0.1, -0.2], [4, 4], &mut rng).unwrap();
        assert_eq!(m.num_params(), 74);
        assert_eq!(m.params().len(), 74);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = mixture(4, 8, &mut rng);
        let mut m = Mlp::new(2, 4, vec![0.3, 0.1], [8, 8], &mut rng).unwrap();
        let before = m.params();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let loss = m.train_step(&data, &s, 300, &cfg, &mut rng).unwrap();
        assert!(loss.is_finite());
        let after = m.params();
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = mixture(3, 4, &mut rng);
        let m = Mlp::new(2, 4, vec![0.5, -0.25], [4, 4], &mut rng).unwrap();
        let n_r = 400;
        let examples: Vec<TrainExample> = data
            .iter()
            .zip([400, 250, 37])
            .map(|(p, n)| TrainExample::draw(p, n, &mut rng))
            .collect();
        for (lambda_d, omega) in [(0.0, false), (0.7, false), (0.3, true)] {
            let cfg = TrainConfig {
                lambda_d,
                use_omega_weights: omega,
                ..TrainConfig::default()
            };
            let (_, grad) = m.batch_loss_and_grad(&examples, &s, n_r, &cfg).unwrap();
            let p0 = m.params();
            let h = 1e-5;
            let mut probe = m.clone();
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] = p0[i] + h;
                probe.set_params(&p).unwrap();
                let up = probe.batch_loss_and_grad(&examples, &s, n_r, &cfg).unwrap().0;
                p[i] = p0[i] - h;
                probe.set_params(&p).unwrap();
                let down = probe.batch_loss_and_grad(&examples, &s, n_r, &cfg).unwrap().0;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.0[i];
                let scale = analytic.abs().max(numeric.abs());
                if scale > 1e-6 {
                    let rel = (analytic - numeric).abs() / scale;
                    assert!(rel <= 1e-4, "param {i}: {analytic} vs {numeric} (rel {rel})");
                } else {
                    assert!((analytic - numeric).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn condition_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::new(2, 4, vec![0.0; 3], [6, 5], &mut rng).unwrap();
        let zn = Latent::standard_normal(&[5, 2], &mut rng);
        let zc = Latent::standard_normal(&[5, 2], &mut rng);
        let eps = Latent::standard_normal(&[5, 2], &mut rng);
        let cond = vec![0.4, -0.9, 0.2];
        let (_, g) = m.eps_loss_cond_grad(17, &zn, &zc, &eps, &cond).unwrap();
        for i in 0..cond.len() {
            let h = 1e-5;
            let mut c = cond.clone();
            c[i] += h;
            let up = m.eps_loss_cond_grad(17, &zn, &zc, &eps, &c).unwrap().0;
            c[i] -= 2.0 * h;
            let down = m.eps_loss_cond_grad(17, &zn, &zc, &eps, &c).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            assert!((numeric - g[i]).abs() <= 1e-4 * numeric.abs().max(g[i].abs()).max(1e-6));
        }
    }

    #[test]
    fn omega_weighting_ignores_the_endpoint() {
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = mixture(2, 4, &mut rng);
        let m = Mlp::new(2, 4, vec![], [4, 4], &mut rng).unwrap();
        let examples: Vec<TrainExample> = data.iter().map(|p| TrainExample::draw(p, 300, &mut rng)).collect();
        let cfg = TrainConfig {
            use_omega_weights: true,
            ..TrainConfig::default()
        };
        let (loss, grad) = m.batch_loss_and_grad(&examples, &s, 300, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.0.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn rejects_perceptual_weight() {
        let cfg = TrainConfig {
            lambda_p: 0.1,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn toy_training_reduces_loss() {
        // Seed 2024 recorded for the training-run check.
        let s = Schedule::new(ScheduleConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let data = mixture(64, 16, &mut rng);
        let mut m = Mlp::new(2, 8, vec![], [32, 32], &mut rng).unwrap();
        let cfg = TrainConfig::default();
        let losses = m.train(&data, &s, 300, &cfg, &mut rng).unwrap();
        let start = losses[0];
        let tail: f64 = losses[losses.len() - 50..].iter().sum::<f64>() / 50.0;
        assert!(tail <= 0.7 * start, "start {start}, final running average {tail}");
    }

    #[test]
    fn sections_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mlp::new(3, 6, vec![1.0, 2.0], [5, 7], &mut rng).unwrap();
        assert_eq!(Mlp::from_sections(&m.to_sections()).unwrap(), m);
        let mut bad = m.to_sections();
        bad[4].pop();
        assert!(Mlp::from_sections(&bad).is_err());
    }
}
