//! Token index coding and the general-purpose byte compressor baseline.

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::vocab::{TokenSequence, Vocabulary, BYTE_TOKENS};
use crate::bytes::Reader;
use crate::codec::{decode_with_probs, encode_with_probs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    /// `ceil(log2 |V|)` bits per token, MSB first.
    Fixed,
    /// Range coded against a static unigram prior.
    Entropy,
}

impl IndexMode {
    fn id(self) -> u8 {
        match self {
            IndexMode::Fixed => 0,
            IndexMode::Entropy => 1,
        }
    }
}

impl std::str::FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(IndexMode::Fixed),
            "entropy" => Ok(IndexMode::Entropy),
            _ => Err(Error::Config(format!("unknown index mode {s:?} (fixed|entropy)"))),
        }
    }
}

/// Section header: mode byte and `u16` token count.
pub const INDEX_HEADER_BYTES: usize = 3;

/// Share of the unigram prior given to byte-fallback tokens.
const BYTE_MASS: f64 = 0.05;

pub fn bits_per_index(v: &Vocabulary) -> u32 {
    usize::BITS - (v.len().max(2) - 1).leading_zeros()
}

/// Static prior: bytes share a small uniform mass, words follow a Zipf law
/// in vocabulary order (the word list is expected to be frequency sorted).
pub fn unigram_prior(v: &Vocabulary) -> Vec<f64> {
    let words = v.len() - BYTE_TOKENS;
    let byte_mass = if words == 0 { 1.0 } else { BYTE_MASS };
    let mut p = vec![byte_mass / BYTE_TOKENS as f64; BYTE_TOKENS];
    let h: f64 = (1..=words).map(|r| 1.0 / r as f64).sum();
    p.extend((1..=words).map(|r| (1.0 - byte_mass) / (r as f64 * h)));
    p
}

/// `[u8 mode][u16 count][payload]`.
pub fn encode_indices(t: &TokenSequence, v: &Vocabulary, mode: IndexMode) -> Result<Vec<u8>> {
    let count = u16::try_from(t.len())
        .map_err(|_| Error::InvalidRange(format!("{} tokens exceed the u16 count field", t.len())))?;
    if let Some(&i) = t.indices().iter().find(|&&i| i as usize >= v.len()) {
        return Err(Error::InvalidRange(format!("token {i} outside vocabulary of {}", v.len())));
    }
    let mut out = vec![mode.id()];
    out.extend_from_slice(&count.to_le_bytes());
    match mode {
        IndexMode::Fixed => {
            let width = bits_per_index(v);
            let mut acc: u64 = 0;
            let mut filled = 0u32;
            for &i in t.indices() {
                acc = (acc << width) | u64::from(i);
                filled += width;
                while filled >= 8 {
                    filled -= 8;
                    out.push((acc >> filled) as u8);
                }
                acc &= (1u64 << filled) - 1;
            }
            if filled > 0 {
                out.push((acc << (8 - filled)) as u8);
            }
        }
        IndexMode::Entropy => {
            if v.len() > 1 << 16 {
                return Err(Error::Config("entropy index mode needs |V| <= 2^16".into()));
            }
            out.extend(encode_with_probs(t.indices(), &unigram_prior(v))?);
        }
    }
    Ok(out)
}

pub fn decode_indices(b: &[u8], v: &Vocabulary) -> Result<TokenSequence> {
    let mut r = Reader::new(b);
    let mode = r.u8()?;
    let count = r.u16()? as usize;
    let payload = r.rest();
    let indices = match mode {
        0 => {
            let width = bits_per_index(v) as usize;
            let need = (count * width).div_ceil(8);
            if payload.len() != need {
                return Err(if payload.len() < need {
                    Error::Truncated
                } else {
                    Error::Corrupt("trailing bytes after fixed-width indices".into())
                });
            }
            (0..count)
                .map(|k| {
                    let mut i = 0u32;
                    for bit in k * width..(k + 1) * width {
                        i = (i << 1) | u32::from(payload[bit / 8] >> (7 - bit % 8) & 1);
                    }
                    i
                })
                .collect()
        }
        1 => {
            if v.len() > 1 << 16 {
                return Err(Error::Config("entropy index mode needs |V| <= 2^16".into()));
            }
            decode_with_probs(payload, count, &unigram_prior(v))?
        }
        m => return Err(Error::Corrupt(format!("unknown index mode {m}"))),
    };
    TokenSequence::new(indices, v).map_err(|e| Error::Corrupt(e.to_string()))
}

/// zlib stream at maximum compression.
pub fn baseline_compress(text: &str) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::best());
    enc.write_all(text.as_bytes()).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

pub fn baseline_decompress(b: &[u8]) -> Result<String> {
    let mut out = Vec::new();
    ZlibDecoder::new(b)
        .read_to_end(&mut out)
        .map_err(|e| Error::Corrupt(format!("zlib: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Corrupt(format!("baseline output is not UTF-8: {e}")))
}
