//! Stand-in latent compressor: uniform scalar quantization, static entropy
//! models and a range coder.

mod model;
mod range;

pub use model::{EntropyModel, FREQ_BITS, PROB_FLOOR, SYMBOL_MAX, SYMBOL_MIN};

use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::latent::Latent;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLatent {
    shape: Vec<usize>,
    symbols: Vec<i32>,
    step: f64,
}

impl QuantizedLatent {
    pub fn new(shape: Vec<usize>, symbols: Vec<i32>, step: f64) -> Result<Self> {
        check_step(step)?;
        let count: usize = shape.iter().product();
        if count != symbols.len() {
            return Err(Error::ShapeMismatch(shape, vec![symbols.len()]));
        }
        if let Some(&s) = symbols.iter().find(|s| !(SYMBOL_MIN..=SYMBOL_MAX).contains(*s)) {
            return Err(Error::SymbolOutOfAlphabet(s as i64));
        }
        Ok(Self { shape, symbols, step })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn symbols(&self) -> &[i32] {
        &self.symbols
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidRange(format!("quantization step must be positive, got {step}")));
    }
    Ok(())
}

/// `round(x / step)`, ties away from zero. Values whose symbol would leave
/// `[-2^15, 2^15 - 1]` are rejected rather than clipped.
pub fn quantize(z: &Latent, step: f64) -> Result<QuantizedLatent> {
    check_step(step)?;
    let symbols = z
        .data()
        .iter()
        .map(|&x| {
            let s = (x / step).round();
            if !s.is_finite() {
                Err(Error::NonFinite(format!("quantizer input {x}")))
            } else if s < SYMBOL_MIN as f64 || s > SYMBOL_MAX as f64 {
                Err(Error::SymbolOutOfAlphabet(s as i64))
            } else {
                Ok(s as i32)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedLatent {
        shape: z.shape().to_vec(),
        symbols,
        step,
    })
}

/// `symbols * step`. Fails for an empty quantized latent, which has no
/// latent counterpart.
pub fn dequantize(q: &QuantizedLatent) -> Result<Latent> {
    let data = q.symbols.iter().map(|&s| s as f64 * q.step).collect();
    Latent::new(q.shape.clone(), data)
}

/// `zc - z0`.
pub fn residual(z0: &Latent, zc: &Latent) -> Result<Latent> {
    zc.sub(z0)
}

/// Ideal code length `sum -log2 p(symbol)` in bits, with the `2^-16` floor.
pub fn estimate_rate(q: &QuantizedLatent, m: &EntropyModel) -> f64 {
    q.symbols.iter().map(|&s| m.bits(s)).sum()
}

pub fn bits_per_pixel(bits: f64, pixels: usize) -> Result<f64> {
    if pixels == 0 {
        return Err(Error::InvalidRange("pixel count must be positive".into()));
    }
    Ok(bits / pixels as f64)
}

fn write_model(m: &EntropyModel, out: &mut Vec<u8>) {
    out.push(m.kind_id());
    let params: Vec<f64> = match m {
        EntropyModel::Laplace { loc, scale } | EntropyModel::Gaussian { loc, scale } => vec![*loc, *scale],
        EntropyModel::Table { offset, probs } => {
            let mut v = vec![*offset as f64, probs.len() as f64];
            v.extend_from_slice(probs);
            v
        }
    };
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

fn read_model(r: &mut Reader<'_>) -> Result<EntropyModel> {
    let bad = |e: Error| Error::Corrupt(format!("entropy model parameters: {e}"));
    match r.u8()? {
        0 => EntropyModel::laplace(r.f64()?, r.f64()?).map_err(bad),
        1 => EntropyModel::gaussian(r.f64()?, r.f64()?).map_err(bad),
        2 => {
            let offset = r.f64()?;
            let len = crate::denoiser::as_count(r.f64()?, "table length")?;
            if len > r.remaining() / 8 || offset.fract() != 0.0 || offset.abs() > 1e6 {
                return Err(Error::Corrupt("entropy table header".into()));
            }
            let probs = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            EntropyModel::table_exact(offset as i32, probs).map_err(bad)
        }
        k => Err(Error::Corrupt(format!("unknown entropy model kind {k}"))),
    }
}

/// Latent section: `[u32 count][u8 model kind][model params f64][u32 crc32][range-coded bytes]`.
/// The checksum covers every other byte of the section.
pub fn encode_latent(q: &QuantizedLatent, m: &EntropyModel) -> Result<Vec<u8>> {
    let count = u32::try_from(q.symbols.len())
        .map_err(|_| Error::InvalidRange("more than 2^32 symbols".into()))?;
    let mut header = Vec::new();
    header.extend_from_slice(&count.to_le_bytes());
    write_model(m, &mut header);
    let payload = if q.symbols.is_empty() {
        Vec::new()
    } else {
        let t = m.freq_table();
        let mut enc = range::Encoder::new();
        for &s in &q.symbols {
            match t.index_of(s) {
                Some(i) => enc.encode(t.cum[i], t.freqs[i], model::TOTAL),
                None => {
                    let e = t.escape_index();
                    enc.encode(t.cum[e], t.freqs[e], model::TOTAL);
                    enc.encode(t.escape_rank(s), 1, t.escape_count());
                }
            }
        }
        enc.finish()
    };
    let mut crc = crc32fast::Hasher::new();
    crc.update(&header);
    crc.update(&payload);
    let mut out = header;
    out.extend_from_slice(&crc.finalize().to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses and verifies a latent section, returning the embedded model and
/// the decoded symbols.
pub fn read_latent_section(b: &[u8]) -> Result<(EntropyModel, Vec<i32>)> {
    let mut r = Reader::new(b);
    let count = r.u32()? as usize;
    let m = read_model(&mut r)?;
    let header_len = r.position();
    let stored = r.u32()?;
    let payload = r.rest();
    let mut crc = crc32fast::Hasher::new();
    crc.update(&b[..header_len]);
    crc.update(payload);
    let computed = crc.finalize();
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if count == 0 {
        if !payload.is_empty() {
            return Err(Error::Corrupt("payload present for an empty latent".into()));
        }
        return Ok((m, Vec::new()));
    }
    // Each symbol costs at least 2^-16 of the range, so a valid stream of
    // `count` symbols cannot be absurdly short.
    if count / 8192 > payload.len() {
        return Err(Error::Truncated);
    }
    let t = m.freq_table();
    let mut dec = range::Decoder::new(payload)?;
    let mut symbols = Vec::with_capacity(count);
    for _ in 0..count {
        let i = t.lookup(dec.target(model::TOTAL)?);
        dec.consume(t.cum[i], t.freqs[i])?;
        if i == t.escape_index() {
            let n = t.escape_count();
            let rank = dec.target(n)?;
            dec.consume(rank, 1)?;
            symbols.push(t.escape_symbol(rank));
        } else {
            symbols.push(t.lo + i as i32);
        }
    }
    Ok((m, symbols))
}

/// Decodes a latent section produced with model `m`. The model stored in the
/// section must equal `m`.
pub fn decode_latent(b: &[u8], m: &EntropyModel, shape: &[usize], step: f64) -> Result<QuantizedLatent> {
    let (stored, symbols) = read_latent_section(b)?;
    if &stored != m {
        return Err(Error::Corrupt(format!("section model {stored:?} differs from {m:?}")));
    }
    QuantizedLatent::new(shape.to_vec(), symbols, step)
}

/// Range-codes `symbols` (each `< probs.len() <= 2^16`) with a static
/// table proportional to `probs`, every entry given frequency >= 1.
pub(crate) fn encode_with_probs(symbols: &[u32], probs: &[f64]) -> Result<Vec<u8>> {
    let (freqs, cum) = cumulative(probs)?;
    let mut enc = range::Encoder::new();
    for &s in symbols {
        let i = s as usize;
        if i >= freqs.len() {
            return Err(Error::SymbolOutOfAlphabet(s as i64));
        }
        enc.encode(cum[i], freqs[i], model::TOTAL);
    }
    Ok(if symbols.is_empty() { Vec::new() } else { enc.finish() })
}

pub(crate) fn decode_with_probs(bytes: &[u8], count: usize, probs: &[f64]) -> Result<Vec<u32>> {
    if count == 0 {
        return if bytes.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Error::Corrupt("payload present for an empty sequence".into()))
        };
    }
    let (freqs, cum) = cumulative(probs)?;
    let mut dec = range::Decoder::new(bytes)?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let v = dec.target(model::TOTAL)?;
        let i = cum.partition_point(|&c| c <= v) - 1;
        dec.consume(cum[i], freqs[i])?;
        out.push(i as u32);
    }
    Ok(out)
}

fn cumulative(probs: &[f64]) -> Result<(Vec<u32>, Vec<u32>)> {
    if probs.is_empty() || probs.len() > model::TOTAL as usize {
        return Err(Error::InvalidRange(format!("coding table of {} entries", probs.len())));
    }
    let freqs = model::quantize_freqs(probs, model::TOTAL);
    let mut cum = Vec::with_capacity(freqs.len() + 1);
    let mut acc = 0;
    for f in &freqs {
        cum.push(acc);
        acc += f;
    }
    cum.push(acc);
    Ok((freqs, cum))
}
