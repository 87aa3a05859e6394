use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::crypto::GroupId;
use crate::error::{Error, Result};
use crate::pir::{PayloadReader, QueryTransport, UpdateTransport};
use crate::template::MatchThresholds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Buckets hold `Enc(g^φ)` next to a random marker.
    Base,
    /// Buckets hold a per-message marker `Enc(f^r)` next to one multiplicative
    /// share of `g^φ`, and the server blinds every answer.
    Extended,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Extended => "extended",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Mode::Base),
            "extended" => Ok(Mode::Extended),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Every tunable of one deployment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeParams {
    /// `N`, template length in bits.
    pub n_bits: usize,
    /// `t`, bits sampled per LSH function.
    pub lsh_bits: usize,
    /// `μ`, number of LSH functions.
    pub lsh_functions: usize,
    /// `ν`, Bloom hash functions per LSH function.
    pub bloom_functions: usize,
    /// `m`
    pub buckets: usize,
    /// `l`, slots per bucket.
    pub bucket_capacity: usize,
    /// `τ`, in composite functions; `μ·ν` is full intersection.
    pub threshold: usize,
    pub lambda_min: usize,
    pub lambda_max: usize,
    pub tag_bits: u32,
    pub group: GroupId,
    pub mode: Mode,
    pub query_transport: QueryTransport,
    pub update_transport: UpdateTransport,
}

const KEYS: [&str; 14] = [
    "n_bits",
    "lsh_bits",
    "lsh_functions",
    "bloom_functions",
    "buckets",
    "bucket_capacity",
    "threshold",
    "lambda_min",
    "lambda_max",
    "tag_bits",
    "group",
    "mode",
    "query_transport",
    "update_transport",
];

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            n_bits: 256,
            lsh_bits: 8,
            lsh_functions: 8,
            bloom_functions: 4,
            buckets: 4096,
            bucket_capacity: 24,
            threshold: 32,
            lambda_min: 26,
            lambda_max: 77,
            tag_bits: 32,
            group: GroupId::Ristretto255,
            mode: Mode::Base,
            query_transport: QueryTransport::Direct,
            update_transport: UpdateTransport::Direct,
        }
    }
}

impl SchemeParams {
    /// `|H^c| = μ·ν`
    pub fn composite_size(&self) -> usize {
        self.lsh_functions * self.bloom_functions
    }

    pub fn thresholds(&self) -> MatchThresholds {
        MatchThresholds {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
        }
    }

    /// Bytes per bucket slot: two ciphertexts.
    pub fn slot_width(&self) -> usize {
        4 * self.group.element_len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_bits == 0 || self.n_bits > 65536 {
            return bad(format!("n_bits = {} outside 1..=65536", self.n_bits));
        }
        if self.lsh_bits == 0 || self.lsh_bits > self.n_bits {
            return bad(format!("lsh_bits = {} outside 1..=n_bits", self.lsh_bits));
        }
        if self.lsh_functions == 0 || self.bloom_functions == 0 {
            return bad("lsh_functions and bloom_functions must be positive".into());
        }
        let hc = self.composite_size();
        if hc > u16::MAX as usize {
            return bad(format!("lsh_functions * bloom_functions = {hc} exceeds 65535"));
        }
        if self.buckets == 0 || self.buckets > u32::MAX as usize || self.bloom_functions > self.buckets {
            return bad(format!("buckets = {} must be at least bloom_functions and fit 32 bits", self.buckets));
        }
        if self.bucket_capacity == 0 || self.bucket_capacity > u16::MAX as usize {
            return bad(format!("bucket_capacity = {} outside 1..=65535", self.bucket_capacity));
        }
        if self.threshold == 0 || self.threshold > hc {
            return bad(format!("threshold = {} outside 1..={hc}", self.threshold));
        }
        if self.lambda_min > self.lambda_max || self.lambda_max > self.n_bits {
            return bad(format!(
                "need lambda_min <= lambda_max <= n_bits, got {} / {}",
                self.lambda_min, self.lambda_max
            ));
        }
        if !(1..=40).contains(&self.tag_bits) {
            return bad(format!("tag_bits = {} outside 1..=40", self.tag_bits));
        }
        if self.mode == Mode::Extended {
            if self.threshold != hc {
                return bad("extended mode recovers tags only from all shares; threshold must be full".into());
            }
            if hc < 2 {
                return bad("extended mode needs at least two composite functions".into());
            }
        }
        let store = self
            .buckets
            .checked_mul(self.bucket_capacity)
            .and_then(|n| n.checked_mul(self.slot_width()));
        if store.is_none_or(|n| n > crate::pir::MAX_PAYLOAD - 8) {
            return bad("bucket store exceeds the frame size limit".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// unknown keys are errors. Missing keys keep their defaults, except that
    /// `threshold` defaults to full intersection and the `lambda` pair scales
    /// with `n_bits`.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut p = Self::default();
        let (mut threshold, mut lmin, mut lmax) = (None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || -> Result<usize> {
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("line {}: {key} needs an integer", lineno + 1)))
            };
            match key {
                "n_bits" => p.n_bits = num()?,
                "lsh_bits" => p.lsh_bits = num()?,
                "lsh_functions" => p.lsh_functions = num()?,
                "bloom_functions" => p.bloom_functions = num()?,
                "buckets" => p.buckets = num()?,
                "bucket_capacity" => p.bucket_capacity = num()?,
                "threshold" if value == "full" => threshold = Some(None),
                "threshold" => threshold = Some(Some(num()?)),
                "lambda_min" => lmin = Some(num()?),
                "lambda_max" => lmax = Some(num()?),
                "tag_bits" => p.tag_bits = num()? as u32,
                "group" => p.group = GroupId::from_name(value)?,
                "mode" => p.mode = Mode::from_name(value)?,
                "query_transport" => p.query_transport = QueryTransport::from_name(value)?,
                "update_transport" => p.update_transport = UpdateTransport::from_name(value)?,
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1))),
            }
        }
        p.threshold = threshold.flatten().unwrap_or(p.composite_size());
        let d = MatchThresholds::default_for(p.n_bits);
        p.lambda_min = lmin.unwrap_or(d.lambda_min);
        p.lambda_max = lmax.unwrap_or(d.lambda_max);
        p.validate()?;
        Ok(p)
    }

    /// Every field as `key = value` lines, accepted by [`Self::from_config`].
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let values = [
            self.n_bits.to_string(),
            self.lsh_bits.to_string(),
            self.lsh_functions.to_string(),
            self.bloom_functions.to_string(),
            self.buckets.to_string(),
            self.bucket_capacity.to_string(),
            self.threshold.to_string(),
            self.lambda_min.to_string(),
            self.lambda_max.to_string(),
            self.tag_bits.to_string(),
            self.group.name().to_string(),
            self.mode.name().to_string(),
            self.query_transport.name().to_string(),
            self.update_transport.name().to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// The keys [`Self::from_config`] understands.
    pub fn config_keys() -> &'static [&'static str] {
        &KEYS
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32);
        out.extend_from_slice(&(self.n_bits as u32).to_be_bytes());
        out.extend_from_slice(&(self.lsh_bits as u16).to_be_bytes());
        out.extend_from_slice(&(self.lsh_functions as u16).to_be_bytes());
        out.extend_from_slice(&(self.bloom_functions as u16).to_be_bytes());
        out.extend_from_slice(&(self.buckets as u32).to_be_bytes());
        out.extend_from_slice(&(self.bucket_capacity as u16).to_be_bytes());
        out.extend_from_slice(&(self.threshold as u16).to_be_bytes());
        out.extend_from_slice(&(self.lambda_min as u32).to_be_bytes());
        out.extend_from_slice(&(self.lambda_max as u32).to_be_bytes());
        out.push(self.tag_bits as u8);
        out.push(self.group.code());
        out.push(match self.mode {
            Mode::Base => 0,
            Mode::Extended => 1,
        });
        out.push(match self.query_transport {
            QueryTransport::Direct => 0,
            QueryTransport::ObliviousBatch => 1,
        });
        out.push(match self.update_transport {
            UpdateTransport::Direct => 0,
            UpdateTransport::FullRewrite => 1,
        });
        out
    }

    pub fn read_from(r: &mut PayloadReader<'_>) -> Result<Self> {
        let p = Self {
            n_bits: r.u32()? as usize,
            lsh_bits: r.u16()? as usize,
            lsh_functions: r.u16()? as usize,
            bloom_functions: r.u16()? as usize,
            buckets: r.u32()? as usize,
            bucket_capacity: r.u16()? as usize,
            threshold: r.u16()? as usize,
            lambda_min: r.u32()? as usize,
            lambda_max: r.u32()? as usize,
            tag_bits: r.u8()? as u32,
            group: GroupId::from_code(r.u8()?)?,
            mode: match r.u8()? {
                0 => Mode::Base,
                1 => Mode::Extended,
                x => return Err(Error::format(format!("unknown mode code {x}"))),
            },
            query_transport: match r.u8()? {
                0 => QueryTransport::Direct,
                1 => QueryTransport::ObliviousBatch,
                x => return Err(Error::format(format!("unknown query transport code {x}"))),
            },
            update_transport: match r.u8()? {
                0 => UpdateTransport::Direct,
                1 => UpdateTransport::FullRewrite,
                x => return Err(Error::format(format!("unknown update transport code {x}"))),
            },
        };
        p.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(p)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(bytes);
        let p = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(p)
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = SchemeParams::default();
        p.validate().unwrap();
        assert_eq!(p.composite_size(), 32);
        assert_eq!(p.threshold, 32);
        assert_eq!(p.slot_width(), 128);
    }

    #[test]
    fn config_round_trip() {
        let p = SchemeParams {
            group: GroupId::Schnorr61,
            mode: Mode::Extended,
            query_transport: QueryTransport::ObliviousBatch,
            update_transport: UpdateTransport::FullRewrite,
            buckets: 64,
            ..SchemeParams::default()
        };
        assert_eq!(SchemeParams::from_config(&p.to_config()).unwrap(), p);
        assert_eq!(SchemeParams::from_bytes(&p.to_bytes()).unwrap(), p);
    }

    #[test]
    fn partial_config_fills_dependent_defaults() {
        let p = SchemeParams::from_config("# small\nn_bits = 128\nlsh_functions = 4 # fewer\n\nbloom_functions=2\n").unwrap();
        assert_eq!(p.threshold, 8);
        assert_eq!((p.lambda_min, p.lambda_max), (13, 38));
        let p = SchemeParams::from_config("threshold = full\nlsh_functions = 2").unwrap();
        assert_eq!(p.threshold, 8);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "colour = blue",
            "n_bits",
            "n_bits = many",
            "group = p256",
            "threshold = 33",
            "mode = extended\nthreshold = 4",
            "bloom_functions = 5000\nbuckets = 100",
            "lambda_min = 80",
        ] {
            assert!(
                matches!(SchemeParams::from_config(bad), Err(Error::Config(_))),
                "{bad:?} accepted"
            );
        }
    }

    #[test]
    fn every_key_is_addressable() {
        let text = SchemeParams::default().to_config();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, SchemeParams::config_keys());
    }

    #[test]
    fn digest_tracks_every_field() {
        let base = SchemeParams::default();
        let variants = [
            SchemeParams { buckets: 4095, ..base.clone() },
            SchemeParams { tag_bits: 20, ..base.clone() },
            SchemeParams { query_transport: QueryTransport::ObliviousBatch, ..base.clone() },
        ];
        for v in variants {
            assert_ne!(v.digest(), base.digest());
        }
    }
}
