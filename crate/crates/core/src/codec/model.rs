//! Static entropy models over the clipped integer symbol alphabet.

use crate::error::{Error, Result};

pub const SYMBOL_MIN: i32 = -(1 << 15);
pub const SYMBOL_MAX: i32 = (1 << 15) - 1;
pub(crate) const ALPHABET: u32 = 1 << 16;

/// Total frequency of coding tables; also the probability floor `2^-16`.
pub const FREQ_BITS: u32 = 16;
pub(crate) const TOTAL: u32 = 1 << FREQ_BITS;
pub const PROB_FLOOR: f64 = 1.0 / TOTAL as f64;

/// Largest window of directly coded symbols; the rest go through escape.
const MAX_WINDOW: i64 = 1 << 14;
/// Parametric windows extend until the tail bin mass drops below this.
const TAIL_MASS: f64 = 1e-7;
const MIN_SCALE: f64 = 1e-3;

/// Distribution over integer symbols. Location and scale are in symbol
/// units (i.e. already divided by the quantization step).
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyModel {
    Laplace { loc: f64, scale: f64 },
    Gaussian { loc: f64, scale: f64 },
    /// `probs[i]` is the probability of symbol `offset + i`.
    Table { offset: i32, probs: Vec<f64> },
}

fn laplace_cdf(x: f64, loc: f64, scale: f64) -> f64 {
    let t = (x - loc) / scale;
    if t < 0.0 {
        0.5 * t.exp()
    } else {
        1.0 - 0.5 * (-t).exp()
    }
}

/// Mass of `[x0, x1]` computed on the side of `loc` that avoids cancellation.
fn interval_mass(cdf: impl Fn(f64) -> f64, sf: impl Fn(f64) -> f64, x0: f64, x1: f64, loc: f64) -> f64 {
    if x0 >= loc {
        sf(x0) - sf(x1)
    } else {
        cdf(x1) - cdf(x0)
    }
}

impl EntropyModel {
    pub fn laplace(loc: f64, scale: f64) -> Result<Self> {
        Self::check_param(loc, scale)?;
        Ok(Self::Laplace { loc, scale })
    }

    pub fn gaussian(loc: f64, scale: f64) -> Result<Self> {
        Self::check_param(loc, scale)?;
        Ok(Self::Gaussian { loc, scale })
    }

    /// Probabilities are normalized to sum to 1; they must be nonnegative
    /// and the table must lie inside the alphabet.
    pub fn table(offset: i32, probs: Vec<f64>) -> Result<Self> {
        let sum = Self::check_table(offset, &probs)?;
        Ok(Self::Table {
            offset,
            probs: probs.into_iter().map(|p| p / sum).collect(),
        })
    }

    /// Table taken verbatim; the probabilities must already sum to 1.
    pub(crate) fn table_exact(offset: i32, probs: Vec<f64>) -> Result<Self> {
        let sum = Self::check_table(offset, &probs)?;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRange(format!("table sums to {sum}")));
        }
        Ok(Self::Table { offset, probs })
    }

    fn check_table(offset: i32, probs: &[f64]) -> Result<f64> {
        let end = offset as i64 + probs.len() as i64 - 1;
        if probs.is_empty() || offset < SYMBOL_MIN || end > SYMBOL_MAX as i64 {
            return Err(Error::InvalidRange(format!(
                "table of {} entries at offset {offset} leaves the alphabet",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidRange("table probabilities must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidRange("table has no mass".into()));
        }
        Ok(sum)
    }

    pub fn uniform(offset: i32, count: usize) -> Result<Self> {
        Self::table(offset, vec![1.0; count])
    }

    fn check_param(loc: f64, scale: f64) -> Result<()> {
        if !loc.is_finite() || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidRange(format!("model loc {loc}, scale {scale}")));
        }
        Ok(())
    }

    /// Gaussian with the sample mean and standard deviation of `symbols`.
    pub fn fit_gaussian(symbols: &[i32]) -> Self {
        let (mean, var) = moments(symbols);
        Self::Gaussian {
            loc: mean,
            scale: var.sqrt().max(MIN_SCALE),
        }
    }

    /// Laplace with the sample mean and mean absolute deviation.
    pub fn fit_laplace(symbols: &[i32]) -> Self {
        let (mean, _) = moments(symbols);
        let mad = if symbols.is_empty() {
            0.0
        } else {
            symbols.iter().map(|&s| (s as f64 - mean).abs()).sum::<f64>() / symbols.len() as f64
        };
        Self::Laplace {
            loc: mean,
            scale: mad.max(MIN_SCALE),
        }
    }

    pub fn kind_id(&self) -> u8 {
        match self {
            EntropyModel::Laplace { .. } => 0,
            EntropyModel::Gaussian { .. } => 1,
            EntropyModel::Table { .. } => 2,
        }
    }

    /// Model probability of symbol `k` (no floor).
    pub fn pmf(&self, k: i32) -> f64 {
        let (lo, hi) = (k as f64 - 0.5, k as f64 + 0.5);
        match *self {
            EntropyModel::Laplace { loc, scale } => interval_mass(
                |x| laplace_cdf(x, loc, scale),
                |x| 1.0 - laplace_cdf(x, loc, scale),
                lo,
                hi,
                loc,
            )
            .max(0.0),
            EntropyModel::Gaussian { loc, scale } => {
                let z = std::f64::consts::FRAC_1_SQRT_2 / scale;
                interval_mass(
                    |x| 0.5 * libm::erfc(-(x - loc) * z),
                    |x| 0.5 * libm::erfc((x - loc) * z),
                    lo,
                    hi,
                    loc,
                )
                .max(0.0)
            }
            EntropyModel::Table { offset, ref probs } => {
                let i = k as i64 - offset as i64;
                if i >= 0 && (i as usize) < probs.len() {
                    probs[i as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// Ideal code length of one symbol, `-log2 max(p, 2^-16)`.
    pub fn bits(&self, k: i32) -> f64 {
        -self.pmf(k).max(PROB_FLOOR).log2()
    }

    /// Inclusive range of directly coded symbols.
    pub(crate) fn window(&self) -> (i32, i32) {
        let (lo, hi) = match *self {
            EntropyModel::Laplace { loc, scale } => {
                let r = (scale * (1.0 / TAIL_MASS).ln()).ceil() + 1.0;
                (loc - r, loc + r)
            }
            EntropyModel::Gaussian { loc, scale } => {
                let r = scale * (2.0 * (1.0 / TAIL_MASS).ln()).sqrt() + 1.0;
                (loc - r.ceil(), loc + r.ceil())
            }
            EntropyModel::Table { offset, ref probs } => {
                (offset as f64, offset as f64 + probs.len() as f64 - 1.0)
            }
        };
        let lo = (lo.floor() as i64).clamp(SYMBOL_MIN as i64, SYMBOL_MAX as i64);
        let mut hi = (hi.ceil() as i64).clamp(SYMBOL_MIN as i64, SYMBOL_MAX as i64);
        if hi - lo + 1 > MAX_WINDOW {
            // Keep the window centred on the bulk of the mass.
            let centre = match *self {
                EntropyModel::Laplace { loc, .. } | EntropyModel::Gaussian { loc, .. } => loc.round() as i64,
                EntropyModel::Table { .. } => lo + MAX_WINDOW / 2,
            };
            let start = (centre - MAX_WINDOW / 2).clamp(lo, hi - MAX_WINDOW + 1);
            return (start as i32, (start + MAX_WINDOW - 1) as i32);
        }
        if hi < lo {
            hi = lo;
        }
        (lo as i32, hi as i32)
    }

    /// Integer coding table: window frequencies (each >= 1) followed by an
    /// escape frequency (>= 1), summing to `2^16`.
    pub(crate) fn freq_table(&self) -> FreqTable {
        let (lo, hi) = self.window();
        let width = (hi as i64 - lo as i64 + 1) as usize;
        let mut probs: Vec<f64> = (lo..=hi).map(|k| self.pmf(k)).collect();
        let inside: f64 = probs.iter().sum();
        probs.push((1.0 - inside).max(0.0));
        let freqs = quantize_freqs(&probs, TOTAL);
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        for f in &freqs {
            cum.push(acc);
            acc += f;
        }
        cum.push(acc);
        debug_assert_eq!(acc, TOTAL);
        FreqTable {
            lo,
            width,
            freqs,
            cum,
        }
    }
}

fn moments(symbols: &[i32]) -> (f64, f64) {
    if symbols.is_empty() {
        return (0.0, 0.0);
    }
    let n = symbols.len() as f64;
    let mean = symbols.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = symbols.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Integer frequencies proportional to `probs`, each at least 1, summing to
/// `total` (requires `probs.len() <= total`).
pub(crate) fn quantize_freqs(probs: &[f64], total: u32) -> Vec<u32> {
    let n = probs.len() as u32;
    assert!(n >= 1 && n <= total);
    let sum: f64 = probs.iter().sum();
    let spare = (total - n) as f64;
    let mut freqs: Vec<u32> = probs
        .iter()
        .map(|p| 1 + if sum > 0.0 { (p / sum * spare).floor() as u32 } else { 0 })
        .collect();
    let assigned: u32 = freqs.iter().sum();
    let mut left = total - assigned;
    if left > 0 {
        // Hand out the remainder by largest fractional part; ties to lower index.
        let mut order: Vec<(f64, usize)> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let x = if sum > 0.0 { p / sum * spare } else { 0.0 };
                (x - x.floor(), i)
            })
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, i) in order.iter().cycle() {
            if left == 0 {
                break;
            }
            freqs[*i] += 1;
            left -= 1;
        }
    }
    freqs
}

pub(crate) struct FreqTable {
    pub lo: i32,
    pub width: usize,
    /// `width` symbol frequencies then the escape frequency.
    pub freqs: Vec<u32>,
    pub cum: Vec<u32>,
}

impl FreqTable {
    pub fn escape_index(&self) -> usize {
        self.width
    }

    /// Index in the table, or `None` for an escaped symbol.
    pub fn index_of(&self, k: i32) -> Option<usize> {
        let i = k as i64 - self.lo as i64;
        (i >= 0 && (i as usize) < self.width).then_some(i as usize)
    }

    /// Number of alphabet symbols outside the window.
    pub fn escape_count(&self) -> u32 {
        ALPHABET - self.width as u32
    }

    /// Position of an escaped symbol among the out-of-window symbols.
    pub fn escape_rank(&self, k: i32) -> u32 {
        let off = (k as i64 - SYMBOL_MIN as i64) as u32;
        let lo = (self.lo as i64 - SYMBOL_MIN as i64) as u32;
        if off < lo {
            off
        } else {
            off - self.width as u32
        }
    }

    pub fn escape_symbol(&self, rank: u32) -> i32 {
        let lo = (self.lo as i64 - SYMBOL_MIN as i64) as u32;
        let off = if rank < lo { rank } else { rank + self.width as u32 };
        (off as i64 + SYMBOL_MIN as i64) as i32
    }

    /// Symbol index whose interval contains `v` (binary search on `cum`).
    pub fn lookup(&self, v: u32) -> usize {
        self.cum.partition_point(|&c| c <= v) - 1
    }
}
