//! Byte-oriented range coder (carry-propagating, 32-bit range).

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

pub(crate) struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes the interval `[cum, cum + freq)` out of `total` (`total <= 2^16`).
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total && total <= 1 << 16);
        let r = self.range / total;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        // The first byte is always the initial zero cache.
        self.out.remove(0);
        self.out
    }
}

pub(crate) struct Decoder<'a> {
    code: u32,
    range: u32,
    r: u32,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Result<Self> {
        if buf.len() < 4 {
            return Err(Error::Truncated);
        }
        let code = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]);
        Ok(Self {
            code,
            range: u32::MAX,
            r: 0,
            buf,
            pos: 4,
        })
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or(Error::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    /// Target value in `[0, total)`; must be followed by [`Decoder::consume`].
    pub fn target(&mut self, total: u32) -> Result<u32> {
        self.r = self.range / total;
        let v = self.code / self.r;
        if v >= total {
            return Err(Error::Corrupt("range decoder value outside the coded interval".into()));
        }
        Ok(v)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        self.code -= self.r * cum;
        self.range = self.r * freq;
        if self.code >= self.range {
            return Err(Error::Corrupt("range decoder lost sync".into()));
        }
        while self.range < TOP {
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
            self.range <<= 8;
        }
        Ok(())
    }

    /// True when every byte written by the encoder has been read.
    #[cfg(test)]
    pub fn exhausted(&self) -> bool {
        self.pos == self.buf.len()
    }
}
