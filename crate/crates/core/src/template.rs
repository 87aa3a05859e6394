//! Binary templates in `{0,1}^N` under the Hamming metric, plus the synthetic
//! template source used in place of a real biometric sensor.
//!
//! Bits are packed most-significant-bit first. When `N` is not a multiple of 8
//! the trailing pad bits of the last byte are always zero.

use std::fmt;
use std::path::Path;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};

/// IrisCode-scale dimension.
pub const IRIS_CODE_BITS: usize = 2048;

/// Dimension used by the desk-scale configurations.
pub const DEFAULT_BITS: usize = 256;

const FILE_MAGIC: &[u8; 4] = b"FTPL";

/// A fixed-length bit vector.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryTemplate {
    len: usize,
    bytes: Vec<u8>,
}

impl BinaryTemplate {
    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::param("template length must be positive"));
        }
        Ok(Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut t = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            t.set(i, b);
        }
        Ok(t)
    }

    /// Parses a `0`/`1` string, ignoring ASCII whitespace and underscores.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_ascii_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::format(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }

    /// Wraps packed bytes; pad bits must be zero.
    pub fn from_packed(len: usize, bytes: Vec<u8>) -> Result<Self> {
        if len == 0 {
            return Err(Error::param("template length must be positive"));
        }
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::format(format!(
                "{} packed bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        let t = Self { len, bytes };
        if t.bytes[t.bytes.len() - 1] & !t.last_byte_mask() != 0 {
            return Err(Error::format("non-zero pad bits in packed template"));
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for {} bits", self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for {} bits", self.len);
        let mask = 0x80 >> (i % 8);
        if value {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for {} bits", self.len);
        self.bytes[i / 8] ^= 0x80 >> (i % 8);
    }

    /// Number of set bits.
    pub fn weight(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn complement(&self) -> Self {
        let mut bytes: Vec<u8> = self.bytes.iter().map(|b| !b).collect();
        let last = bytes.len() - 1;
        bytes[last] &= self.last_byte_mask();
        Self { len: self.len, bytes }
    }

    fn last_byte_mask(&self) -> u8 {
        match self.len % 8 {
            0 => 0xff,
            r => 0xffu8 << (8 - r),
        }
    }

    /// `FTPL` file image: magic, 4-byte big-endian `N`, packed bits.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.bytes.len());
        out.extend_from_slice(FILE_MAGIC);
        out.extend_from_slice(&(self.len as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_file_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 8 || &data[..4] != FILE_MAGIC {
            return Err(Error::format("not a template file (bad magic)"));
        }
        let len = u32::from_be_bytes(data[4..8].try_into().unwrap()) as usize;
        Self::from_packed(len, data[8..].to_vec())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file_bytes(&std::fs::read(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_file_bytes())?;
        Ok(())
    }
}

impl fmt::Debug for BinaryTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryTemplate({} bits, ", self.len)?;
        for b in self.bytes.iter().take(8) {
            write!(f, "{b:02x}")?;
        }
        if self.bytes.len() > 8 {
            write!(f, "..")?;
        }
        write!(f, ")")
    }
}

/// Number of positions at which `a` and `b` differ.
pub fn hamming_distance(a: &BinaryTemplate, b: &BinaryTemplate) -> Result<usize> {
    if a.len != b.len {
        return Err(Error::Dimension {
            expected: a.len,
            found: b.len,
        });
    }
    Ok(a.bytes
        .iter()
        .zip(&b.bytes)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}

/// Decision thresholds: pairs within `lambda_min` are the same source, pairs
/// beyond `lambda_max` are different sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchThresholds {
    pub lambda_min: usize,
    pub lambda_max: usize,
}

impl MatchThresholds {
    pub fn new(lambda_min: usize, lambda_max: usize, n_bits: usize) -> Result<Self> {
        if lambda_min >= lambda_max || lambda_max > n_bits {
            return Err(Error::param(format!(
                "thresholds must satisfy 0 <= lambda_min < lambda_max <= N, got {lambda_min}, {lambda_max}, N = {n_bits}"
            )));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
        })
    }

    /// Roughly 10% / 30% of `N`; 26 / 77 at `N = 256`.
    pub fn default_for(n_bits: usize) -> Self {
        let lambda_min = (n_bits as f64 * 0.1).round() as usize;
        let lambda_max = ((n_bits as f64 * 0.3).round() as usize).max(lambda_min + 1);
        Self {
            lambda_min,
            lambda_max: lambda_max.min(n_bits),
        }
    }

    pub fn is_match(&self, distance: usize) -> bool {
        distance <= self.lambda_min
    }
}

/// Uniformly random template; each bit independent and fair.
pub fn random_template<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<BinaryTemplate> {
    let mut t = BinaryTemplate::zeros(len)?;
    rng.fill_bytes(&mut t.bytes);
    let last = t.bytes.len() - 1;
    t.bytes[last] &= t.last_byte_mask();
    Ok(t)
}

/// Passes `t` through a binary symmetric channel with crossover `flip_prob`.
pub fn perturb_bsc<R: Rng + ?Sized>(
    t: &BinaryTemplate,
    flip_prob: f64,
    rng: &mut R,
) -> Result<BinaryTemplate> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::param(format!("flip probability {flip_prob} outside [0, 1]")));
    }
    let mut out = t.clone();
    for i in 0..t.len {
        if rng.random_bool(flip_prob) {
            out.flip(i);
        }
    }
    Ok(out)
}

/// Flips exactly `distance` distinct positions chosen uniformly.
pub fn perturb_exact<R: Rng + ?Sized>(
    t: &BinaryTemplate,
    distance: usize,
    rng: &mut R,
) -> Result<BinaryTemplate> {
    if distance > t.len {
        return Err(Error::param(format!(
            "cannot flip {distance} positions of a {}-bit template",
            t.len
        )));
    }
    let mut out = t.clone();
    for i in rand::seq::index::sample(rng, t.len, distance) {
        out.flip(i);
    }
    Ok(out)
}
