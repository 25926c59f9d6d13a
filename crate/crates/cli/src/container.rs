//! `RSLC` bitstream container: a fixed header followed by the latent and
//! (optionally) text sections, closed by a CRC-32 over everything before it.
//!
//! ```text
//! "RSLC" | u8 version | u8 flags | u8 schedule_id | u16 T | u16 N_r
//! | u8 rank | u16 dim * rank | f64 quant_step
//! | u32 len | latent section
//! [| u32 len | text section]      (flags bit 1)
//! | u32 crc32
//! ```
//!
//! Integers are little-endian. Flags bit 0 is eta (0 or 1).

use rescodec::{Error, Result, ScheduleKind};

pub const MAGIC: &[u8; 4] = b"RSLC";
pub const VERSION: u8 = 1;
const FLAG_ETA: u8 = 1;
const FLAG_TEXT: u8 = 2;

/// Header bytes before the shape dimensions.
pub const FIXED_HEADER_BYTES: usize = 4 + 1 + 1 + 1 + 2 + 2 + 1 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub eta: f64,
    pub schedule: ScheduleKind,
    pub steps: u16,
    pub n_r: u16,
    pub shape: Vec<u16>,
    pub quant_step: f64,
    pub latent: Vec<u8>,
    pub text: Option<Vec<u8>>,
}

/// Section payload sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rates {
    /// Text section (the caption budget).
    pub r_c: u64,
    /// Latent section.
    pub r_zc: u64,
}

impl Rates {
    pub fn total(self) -> u64 {
        self.r_c + self.r_zc
    }
}

impl Container {
    pub fn rates(&self) -> Rates {
        Rates {
            r_c: self.text.as_ref().map_or(0, |t| 8 * t.len() as u64),
            r_zc: 8 * self.latent.len() as u64,
        }
    }

    pub fn shape_usize(&self) -> Vec<usize> {
        self.shape.iter().map(|&d| usize::from(d)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.eta != 0.0 && self.eta != 1.0 {
            return Err(Error::UnsupportedEta(self.eta));
        }
        if self.n_r == 0 || self.n_r > self.steps {
            return Err(Error::InvalidRange(format!("N_r = {} with T = {}", self.n_r, self.steps)));
        }
        if self.shape.len() > usize::from(u8::MAX) || self.shape.contains(&0) {
            return Err(Error::InvalidRange(format!("latent shape {:?}", self.shape)));
        }
        if !(self.quant_step.is_finite() && self.quant_step > 0.0) {
            return Err(Error::InvalidRange(format!("quant_step {}", self.quant_step)));
        }
        for len in std::iter::once(self.latent.len()).chain(self.text.as_ref().map(Vec::len)) {
            if u32::try_from(len).is_err() {
                return Err(Error::InvalidRange("section longer than 2^32 bytes".into()));
            }
        }
        Ok(())
    }
}

pub fn write_container(c: &Container) -> Result<Vec<u8>> {
    c.validate()?;
    let mut out = Vec::with_capacity(FIXED_HEADER_BYTES + 2 * c.shape.len() + 12 + c.latent.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let mut flags = 0;
    if c.eta == 1.0 {
        flags |= FLAG_ETA;
    }
    if c.text.is_some() {
        flags |= FLAG_TEXT;
    }
    out.push(flags);
    out.push(c.schedule.id());
    out.extend_from_slice(&c.steps.to_le_bytes());
    out.extend_from_slice(&c.n_r.to_le_bytes());
    out.push(c.shape.len() as u8);
    for d in &c.shape {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&c.quant_step.to_le_bytes());
    for section in std::iter::once(&c.latent).chain(c.text.as_ref()) {
        out.extend_from_slice(&(section.len() as u32).to_le_bytes());
        out.extend_from_slice(section);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.saturating_add(n)).ok_or(Error::Truncated)?;
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn read_container(bytes: &[u8]) -> Result<Container> {
    let mut r = Cursor { buf: bytes, pos: 0 };
    // Magic and version are judged on whatever prefix is present.
    let magic = &bytes[..bytes.len().min(4)];
    if magic != &MAGIC[..magic.len()] {
        return Err(Error::BadMagic);
    }
    r.take(4)?;
    let [version] = r.array()?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let [flags] = r.array()?;
    let [schedule_id] = r.array()?;
    let steps = u16::from_le_bytes(r.array()?);
    let n_r = u16::from_le_bytes(r.array()?);
    let [rank] = r.array()?;
    let shape = (0..rank)
        .map(|_| r.array().map(u16::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let quant_step = f64::from_le_bytes(r.array()?);
    let section = |r: &mut Cursor<'_>| -> Result<Vec<u8>> {
        let len = u32::from_le_bytes(r.array()?) as usize;
        r.take(len).map(<[u8]>::to_vec)
    };
    let latent = section(&mut r)?;
    let text = if flags & FLAG_TEXT != 0 { Some(section(&mut r)?) } else { None };
    let body = r.pos;
    let stored = u32::from_le_bytes(r.array()?);
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes after container", bytes.len() - r.pos)));
    }
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if flags & !(FLAG_ETA | FLAG_TEXT) != 0 {
        return Err(Error::Corrupt(format!("unknown flag bits {flags:#04x}")));
    }
    let schedule = ScheduleKind::from_id(schedule_id)
        .ok_or_else(|| Error::Corrupt(format!("unknown schedule id {schedule_id}")))?;
    let c = Container {
        eta: f64::from(flags & FLAG_ETA),
        schedule,
        steps,
        n_r,
        shape,
        quant_step,
        latent,
        text,
    };
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn minimal() -> Container {
        Container {
            eta: 0.0,
            schedule: ScheduleKind::ScaledLinear,
            steps: 1000,
            n_r: 1,
            shape: vec![],
            quant_step: 1.0,
            latent: vec![],
            text: None,
        }
    }

    #[test]
    fn minimal_container_size() {
        let c = minimal();
        let b = write_container(&c).unwrap();
        assert_eq!(FIXED_HEADER_BYTES, 20);
        // Header, latent length prefix, checksum.
        assert_eq!(b.len(), 20 + 4 + 4);
        assert_eq!(read_container(&b).unwrap(), c);
        let with_text = Container { text: Some(vec![]), ..c };
        let b = write_container(&with_text).unwrap();
        assert_eq!(b.len(), 20 + 4 + 4 + 4);
        assert_eq!(read_container(&b).unwrap(), with_text);
        assert_eq!(with_text.rates(), Rates { r_c: 0, r_zc: 0 });
    }

    #[test]
    fn header_layout() {
        let c = Container {
            eta: 1.0,
            shape: vec![4, 0x0102],
            n_r: 300,
            quant_step: 0.5,
            latent: vec![9; 3],
            text: Some(vec![7]),
            ..minimal()
        };
        let b = write_container(&c).unwrap();
        assert_eq!(&b[..4], b"RSLC");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 0b11);
        assert_eq!(b[6], 2);
        assert_eq!(&b[7..9], &1000u16.to_le_bytes());
        assert_eq!(&b[9..11], &300u16.to_le_bytes());
        assert_eq!(b[11], 2);
        assert_eq!(&b[12..16], &[4, 0, 2, 1]);
        assert_eq!(&b[16..24], &0.5f64.to_le_bytes());
        assert_eq!(&b[24..28], &3u32.to_le_bytes());
        assert_eq!(c.rates(), Rates { r_c: 8, r_zc: 24 });
        assert_eq!(c.rates().total(), 32);
    }

    #[test]
    fn corruption_has_distinct_codes() {
        let c = Container {
            latent: vec![1, 2, 3, 4, 5],
            text: Some(vec![6, 7]),
            ..minimal()
        };
        let b = write_container(&c).unwrap();
        let code = |b: &[u8]| read_container(b).unwrap_err().code();
        let mut bad = b.clone();
        bad[0] ^= 0xff;
        assert_eq!(code(&bad), "bad-magic");
        let mut bad = b.clone();
        bad[4] = 2;
        assert_eq!(code(&bad), "bad-version");
        assert_eq!(code(&b[..b.len() - 1]), "truncated");
        assert_eq!(code(&b[..6]), "truncated");
        let mut bad = b.clone();
        bad[b.len() - 6] ^= 1;
        assert_eq!(code(&bad), "checksum");
        let mut long = b.clone();
        long.push(0);
        assert_eq!(code(&long), "corrupt");
        assert_eq!(code(b"RS"), "truncated");
        assert_eq!(code(b"RX"), "bad-magic");
    }

    #[test]
    fn rejects_out_of_range_fields() {
        assert!(write_container(&Container { n_r: 0, ..minimal() }).is_err());
        assert!(write_container(&Container { n_r: 1001, ..minimal() }).is_err());
        assert!(write_container(&Container { eta: 0.5, ..minimal() }).is_err());
        assert!(write_container(&Container { quant_step: 0.0, ..minimal() }).is_err());
        assert!(write_container(&Container { shape: vec![3, 0], ..minimal() }).is_err());
    }

    fn random_container(rng: &mut ChaCha8Rng) -> Container {
        let steps = rng.gen_range(1..=u16::MAX);
        let rank = rng.gen_range(0..5);
        let bytes = |rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(0..64);
            (0..n).map(|_| rng.gen()).collect::<Vec<u8>>()
        };
        Container {
            eta: f64::from(rng.gen_range(0..2u8)),
            schedule: ScheduleKind::from_id(rng.gen_range(0..4)).unwrap(),
            steps,
            n_r: rng.gen_range(1..=steps),
            shape: (0..rank).map(|_| rng.gen_range(1..=u16::MAX)).collect(),
            quant_step: rng.gen_range(1e-6..1e3),
            latent: bytes(rng),
            text: rng.gen_bool(0.5).then(|| bytes(rng)),
        }
    }

    #[test]
    fn fuzz_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let c = random_container(&mut rng);
            let b = write_container(&c).unwrap();
            let back = read_container(&b).unwrap();
            assert_eq!(back, c);
            assert_eq!(write_container(&back).unwrap(), b);
        }
    }

    #[test]
    fn single_bit_flips_never_pass_silently() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_container(&mut rng);
        let b = write_container(&c).unwrap();
        for i in 0..b.len() * 8 {
            let mut bad = b.clone();
            bad[i / 8] ^= 1 << (i % 8);
            assert!(read_container(&bad).is_err(), "bit {i}");
        }
    }
}
