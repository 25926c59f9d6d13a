//! Word vocabulary with byte fallback and a seeded toy embedding table.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Indices `0..256` are raw bytes; words follow in file order.
pub const BYTE_TOKENS: usize = 256;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<String>,
    lookup: HashMap<String, usize>,
    dim: usize,
    embeddings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    indices: Vec<u32>,
}

impl TokenSequence {
    pub fn new(indices: Vec<u32>, v: &Vocabulary) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i as usize >= v.len()) {
            return Err(Error::InvalidRange(format!("token {i} outside vocabulary of {}", v.len())));
        }
        Ok(Self { indices })
    }

    pub(crate) fn from_raw(indices: Vec<u32>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl Vocabulary {
    /// Builds a vocabulary from word entries (lowercase alphanumeric). The
    /// embedding table has unit-norm rows drawn from `seed`.
    pub fn new(words: impl IntoIterator<Item = String>, dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("embedding dimension must be >= 2, got {dim}")));
        }
        let mut entries: Vec<String> = (0..BYTE_TOKENS).map(|b| format!("<0x{b:02X}>")).collect();
        let mut lookup = HashMap::new();
        for w in words {
            if w.is_empty() || !w.chars().all(char::is_alphanumeric) || w.to_lowercase() != w {
                return Err(Error::Config(format!(
                    "vocabulary entry {:?} (line {}) must be a lowercase alphanumeric word",
                    w,
                    entries.len() - BYTE_TOKENS + 1
                )));
            }
            if lookup.insert(w.clone(), entries.len()).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {w:?}")));
            }
            entries.push(w);
        }
        if entries.len() > u32::MAX as usize {
            return Err(Error::Config("vocabulary too large".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embeddings = Vec::with_capacity(entries.len() * dim);
        for _ in 0..entries.len() {
            let row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            embeddings.extend(row.into_iter().map(|x| x / norm));
        }
        Ok(Self {
            entries,
            lookup,
            dim,
            embeddings,
        })
    }

    /// One word per line; the line number gives the index after the byte slots.
    pub fn from_text(text: &str, dim: usize, seed: u64) -> Result<Self> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        if text.is_empty() {
            return Self::new(Vec::new(), dim, seed);
        }
        Self::new(text.split('\n').map(|l| l.trim_end_matches('\r').to_string()), dim, seed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize) -> Option<&str> {
        self.entries.get(i).map(String::as_str)
    }

    pub fn word_index(&self, w: &str) -> Option<usize> {
        self.lookup.get(w).copied()
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    /// Stacked embedding rows of a token sequence.
    pub fn embed(&self, t: &TokenSequence) -> Vec<f64> {
        t.indices.iter().flat_map(|&i| self.embedding(i as usize).iter().copied()).collect()
    }
}

/// Lowercase with runs of whitespace collapsed to one space and trimmed.
pub fn canonicalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Vocabulary words become word tokens; everything else is byte tokens. A
/// single space between two word tokens is implied rather than coded.
pub fn tokenize(text: &str, v: &Vocabulary) -> TokenSequence {
    let canon = canonicalize(text);
    let mut out: Vec<u32> = Vec::new();
    let mut last_word = false;
    let mut rest = canon.as_str();
    while let Some(c) = rest.chars().next() {
        if c.is_alphanumeric() {
            let end = rest.find(|ch: char| !ch.is_alphanumeric()).unwrap_or(rest.len());
            let run = &rest[..end];
            if let Some(i) = v.word_index(run) {
                if last_word {
                    // The implied space was emitted as a byte; take it back.
                    out.pop();
                }
                out.push(i as u32);
                last_word = true;
            } else {
                out.extend(run.bytes().map(u32::from));
                last_word = false;
            }
            rest = &rest[end..];
        } else {
            let mut buf = [0u8; 4];
            out.extend(c.encode_utf8(&mut buf).bytes().map(u32::from));
            // A word followed by exactly one space, then another word, drops
            // that space; track it so the next word can retract it.
            last_word = last_word && c == ' ' && out.len() >= 2 && is_word(out[out.len() - 2]);
            rest = &rest[c.len_utf8()..];
        }
    }
    TokenSequence { indices: out }
}

fn is_word(i: u32) -> bool {
    i as usize >= BYTE_TOKENS
}

pub fn detokenize(t: &TokenSequence, v: &Vocabulary) -> String {
    let mut bytes = Vec::new();
    let mut prev_word = false;
    for &i in &t.indices {
        if is_word(i) {
            if prev_word {
                bytes.push(b' ');
            }
            bytes.extend_from_slice(v.entries[i as usize].as_bytes());
            prev_word = true;
        } else {
            bytes.push(i as u8);
            prev_word = false;
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}
