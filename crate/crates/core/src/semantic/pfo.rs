//! Projected discrete prompt optimization over the vocabulary embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{TokenSequence, Vocabulary};
use crate::denoiser::Mlp;
use crate::diffusion::{forward_sample, ResidualPair};
use crate::error::{Error, Result};
use crate::latent::Latent;
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq)]
pub struct PfoConfig {
    pub lambda_l: f64,
    pub lambda_c: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Number of optimized token vectors `M`; must match the initial sequence.
    pub tokens: usize,
    /// Steps `n` are drawn uniformly from this pool (the inference step list).
    pub step_pool: Vec<usize>,
}

impl PfoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_c >= 0.0) || !self.lambda_l.is_finite() || !self.lambda_c.is_finite() {
            return Err(Error::Config(format!(
                "lambda_l = {}, lambda_c = {} (lambda_c must be >= 0)",
                self.lambda_l, self.lambda_c
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("pfo needs at least one iteration".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate = {}", self.learning_rate)));
        }
        if self.step_pool.is_empty() || self.step_pool.contains(&0) {
            return Err(Error::Config("step pool must be nonempty with steps >= 1".into()));
        }
        if self.tokens == 0 {
            return Err(Error::Config("pfo needs at least one token".into()));
        }
        Ok(())
    }
}

/// Index of the row of `table` nearest to `row` in Euclidean distance; the
/// lowest index wins ties.
fn nearest(table: &[f64], dim: usize, row: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, e) in table.chunks(dim).enumerate() {
        let d: f64 = e.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Replaces every row of `p` (row-major, `dim` columns) by its nearest
/// vocabulary embedding.
pub fn project_embeddings(p: &[f64], v: &Vocabulary) -> Result<(Vec<f64>, TokenSequence)> {
    let d = v.dim();
    if p.len() % d != 0 {
        return Err(Error::ShapeMismatch(vec![p.len()], vec![d]));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("embedding matrix".into()));
    }
    let idx: Vec<u32> = p.chunks(d).map(|row| nearest(v.embeddings(), d, row) as u32).collect();
    let t = TokenSequence::from_raw(idx);
    Ok((v.embed(&t), t))
}

fn pooled(p: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || p.is_empty() || p.len() % dim != 0 {
        return Err(Error::ShapeMismatch(vec![p.len()], vec![dim]));
    }
    let m = (p.len() / dim) as f64;
    let mut u = vec![0.0; dim];
    for row in p.chunks(dim) {
        for (a, b) in u.iter_mut().zip(row) {
            *a += b / m;
        }
    }
    Ok(u)
}

/// `1 - cos(mean row of p, target)` and its gradient with respect to `p`.
pub fn aux_loss_grad(p: &[f64], dim: usize, target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target.len() != dim {
        return Err(Error::ShapeMismatch(vec![target.len()], vec![dim]));
    }
    let u = pooled(p, dim)?;
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nt = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nt == 0.0 {
        return Err(Error::InvalidRange("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = u.iter().zip(target).map(|(a, b)| a * b).sum();
    let cos = dot / (nu * nt);
    let m = (p.len() / dim) as f64;
    let du: Vec<f64> = u
        .iter()
        .zip(target)
        .map(|(ui, ti)| -(ti / (nu * nt) - cos * ui / (nu * nu)) / m)
        .collect();
    let grad = (0..p.len()).map(|k| du[k % dim]).collect();
    Ok((1.0 - cos, grad))
}

pub fn aux_loss(p: &[f64], dim: usize, target: &[f64]) -> Result<f64> {
    aux_loss_grad(p, dim, target).map(|(l, _)| l)
}

/// Loss evaluated at one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PfoRecord {
    pub loss: f64,
    pub step: usize,
    pub tokens: TokenSequence,
    /// Continuous embedding `P` that was projected.
    pub continuous: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfoOutcome {
    /// Projection of `P` after the last update.
    pub tokens: TokenSequence,
    /// One record per projection, including the final one.
    pub history: Vec<PfoRecord>,
}

impl PfoOutcome {
    /// Lowest-loss record; the earliest wins ties.
    pub fn best(&self) -> &PfoRecord {
        self.history
            .iter()
            .reduce(|a, b| if b.loss < a.loss { b } else { a })
            .expect("history holds at least the final projection")
    }
}

/// Differentiable loss over the projected embeddings `P'` at step `n`.
pub type PfoLoss<'a> = dyn FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)> + 'a;

/// Runs `cfg.iterations` rounds of: project, draw `n` from the step pool,
/// take the gradient at `P'`, update the continuous `P`. The final
/// projection is evaluated too, so every projection is in the history.
pub fn pfo_optimize<R: Rng + ?Sized>(
    init: &TokenSequence,
    loss: &mut PfoLoss<'_>,
    v: &Vocabulary,
    cfg: &PfoConfig,
    rng: &mut R,
) -> Result<PfoOutcome> {
    cfg.validate()?;
    if init.len() != cfg.tokens {
        return Err(Error::Config(format!(
            "initial sequence has {} tokens, config expects {}",
            init.len(),
            cfg.tokens
        )));
    }
    TokenSequence::new(init.indices().to_vec(), v)?;
    let mut p = v.embed(init);
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    let mut evaluate = |p: &[f64], rng: &mut R, history: &mut Vec<PfoRecord>| -> Result<Vec<f64>> {
        let (p_proj, tokens) = project_embeddings(p, v)?;
        let n = cfg.step_pool[rng.gen_range(0..cfg.step_pool.len())];
        let (l, g) = loss(&p_proj, n)?;
        if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "pfo loss {l} at iteration {} (step {n}, tokens {:?})",
                history.len(),
                tokens.indices()
            )));
        }
        if g.len() != p.len() {
            return Err(Error::ShapeMismatch(vec![g.len()], vec![p.len()]));
        }
        history.push(PfoRecord {
            loss: l,
            step: n,
            tokens,
            continuous: p.to_vec(),
        });
        Ok(g)
    };
    for _ in 0..cfg.iterations {
        let g = evaluate(&p, rng, &mut history)?;
        for (x, gx) in p.iter_mut().zip(&g) {
            *x -= cfg.learning_rate * gx;
        }
    }
    evaluate(&p, rng, &mut history)?;
    let tokens = history.last().expect("final projection recorded").tokens.clone();
    Ok(PfoOutcome { tokens, history })
}

/// `lambda_l * denoise(P', n) + lambda_c * aux(P', target)`.
pub fn combined_loss<'a>(
    lambda_l: f64,
    denoise: &'a mut PfoLoss<'a>,
    lambda_c: f64,
    target: &'a [f64],
    dim: usize,
) -> impl FnMut(&[f64], usize) -> Result<(f64, Vec<f64>)> + 'a {
    move |p, n| {
        let (ld, gd) = denoise(p, n)?;
        let (la, ga) = if lambda_c != 0.0 {
            aux_loss_grad(p, dim, target)?
        } else {
            (0.0, vec![0.0; p.len()])
        };
        let g = gd.iter().zip(&ga).map(|(a, b)| lambda_l * a + lambda_c * b).collect();
        Ok((lambda_l * ld + lambda_c * la, g))
    }
}

/// Noise-prediction error of an mlp denoiser whose condition vector is the
/// mean-pooled prompt embedding. Fresh noise is drawn per evaluation.
pub struct MlpDenoisingLoss<'a> {
    pub mlp: &'a Mlp,
    pub schedule: &'a Schedule,
    pub pairs: &'a [ResidualPair],
    pub n_r: usize,
    pub eta: f64,
    pub rng: ChaCha8Rng,
}

impl MlpDenoisingLoss<'_> {
    pub fn eval(&mut self, p: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
        let dim = self.mlp.condition().len();
        let cond = pooled(p, dim)?;
        if self.pairs.is_empty() {
            return Err(Error::Config("pfo denoising loss needs at least one latent pair".into()));
        }
        let n = n.min(self.n_r);
        let mut total = 0.0;
        let mut gcond = vec![0.0; dim];
        for pair in self.pairs {
            let eps = Latent::standard_normal(pair.z0().shape(), &mut self.rng);
            let z_n = forward_sample(pair, n, self.n_r, self.schedule, self.eta, &eps)?;
            let (l, g) = self.mlp.eps_loss_cond_grad(n, &z_n, pair.zc(), &eps, &cond)?;
            total += l;
            for (a, b) in gcond.iter_mut().zip(g) {
                *a += b;
            }
        }
        let k = self.pairs.len() as f64;
        let m = (p.len() / dim) as f64;
        let grad = (0..p.len()).map(|i| gcond[i % dim] / (k * m)).collect();
        Ok((total / k, grad))
    }
}
