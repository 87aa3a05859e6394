//! Bit-sampling locality-sensitive hashing over `{0,1}^N`.
//!
//! Each of the `μ` functions projects a template onto `t` sampled positions.
//! Under a binary symmetric channel that moves a template by `r` bits on
//! average, one function collides with probability `(1 - r/N)^t`.
//!
//! Functions are indexed from zero.

use rand::Rng;

use crate::error::{Error, Result};
use crate::template::{perturb_exact, random_template, BinaryTemplate};

/// A `t`-bit LSH output, packed most-significant-bit first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LshDigest(Vec<u8>);

impl LshDigest {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// `μ` projections, each onto `t` distinct positions of an `N`-bit template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LshFamily {
    n_bits: usize,
    digest_bits: usize,
    positions: Vec<Vec<u16>>,
}

impl LshFamily {
    /// Samples a family. When `μ·t ≤ N` the functions read pairwise disjoint
    /// position sets; otherwise each function samples independently.
    pub fn build<R: Rng + ?Sized>(
        n_bits: usize,
        digest_bits: usize,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        validate_shape(n_bits, digest_bits, count)?;
        let positions = if count * digest_bits <= n_bits {
            let all = rand::seq::index::sample(rng, n_bits, count * digest_bits).into_vec();
            all.chunks(digest_bits)
                .map(|c| c.iter().map(|&p| p as u16).collect())
                .collect()
        } else {
            (0..count)
                .map(|_| {
                    rand::seq::index::sample(rng, n_bits, digest_bits)
                        .into_iter()
                        .map(|p| p as u16)
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            n_bits,
            digest_bits,
            positions,
        })
    }

    pub fn from_positions(n_bits: usize, positions: Vec<Vec<u16>>) -> Result<Self> {
        let digest_bits = positions.first().map_or(0, Vec::len);
        validate_shape(n_bits, digest_bits, positions.len())?;
        for (i, f) in positions.iter().enumerate() {
            if f.len() != digest_bits {
                return Err(Error::param(format!("function {i} samples {} positions, expected {digest_bits}", f.len())));
            }
            let mut sorted = f.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != f.len() || sorted.last().is_some_and(|&p| p as usize >= n_bits) {
                return Err(Error::param(format!(
                    "function {i} must sample distinct positions below {n_bits}"
                )));
            }
        }
        Ok(Self {
            n_bits,
            digest_bits,
            positions,
        })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// `t`
    pub fn digest_bits(&self) -> usize {
        self.digest_bits
    }

    /// `μ`
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self, i: usize) -> &[u16] {
        &self.positions[i]
    }

    fn check(&self, i: usize, x: &BinaryTemplate) -> Result<()> {
        if i >= self.positions.len() {
            return Err(Error::param(format!(
                "LSH function index {i} out of range for {} functions",
                self.positions.len()
            )));
        }
        if x.len() != self.n_bits {
            return Err(Error::Dimension {
                expected: self.n_bits,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// The bits of `x` at function `i`'s sampled positions, in sampling order.
    pub fn eval(&self, i: usize, x: &BinaryTemplate) -> Result<LshDigest> {
        self.check(i, x)?;
        let mut out = vec![0u8; self.digest_bits.div_ceil(8)];
        for (k, &p) in self.positions[i].iter().enumerate() {
            if x.bit(p as usize) {
                out[k / 8] |= 0x80 >> (k % 8);
            }
        }
        Ok(LshDigest(out))
    }

    /// Whether function `i` maps `a` and `b` to the same digest.
    pub fn collides(&self, i: usize, a: &BinaryTemplate, b: &BinaryTemplate) -> Result<bool> {
        self.check(i, a)?;
        self.check(i, b)?;
        Ok(self.positions[i]
            .iter()
            .all(|&p| a.bit(p as usize) == b.bit(p as usize)))
    }

    /// Descriptor: `t` and `μ` as 16-bit big-endian, then every position.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 2 * self.len() * self.digest_bits);
        out.extend_from_slice(&(self.digest_bits as u16).to_be_bytes());
        out.extend_from_slice(&(self.positions.len() as u16).to_be_bytes());
        for f in &self.positions {
            for p in f {
                out.extend_from_slice(&p.to_be_bytes());
            }
        }
        out
    }

    /// Inverse of [`LshFamily::to_bytes`]; returns the family and the bytes consumed.
    pub fn from_bytes(n_bits: usize, data: &[u8]) -> Result<(Self, usize)> {
        if data.len() < 4 {
            return Err(Error::format("truncated LSH descriptor"));
        }
        let t = u16::from_be_bytes([data[0], data[1]]) as usize;
        let mu = u16::from_be_bytes([data[2], data[3]]) as usize;
        let used = 4 + 2 * t * mu;
        if data.len() < used {
            return Err(Error::format("truncated LSH descriptor"));
        }
        let positions = data[4..used]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect::<Vec<_>>()
            .chunks(t.max(1))
            .map(<[u16]>::to_vec)
            .collect();
        Ok((Self::from_positions(n_bits, positions)?, used))
    }
}

fn validate_shape(n_bits: usize, digest_bits: usize, count: usize) -> Result<()> {
    if n_bits == 0 || n_bits > u16::MAX as usize + 1 {
        return Err(Error::param(format!("N = {n_bits} outside 1..=65536")));
    }
    if digest_bits == 0 || digest_bits > n_bits {
        return Err(Error::param(format!("need 1 <= t <= N, got t = {digest_bits}, N = {n_bits}")));
    }
    if count == 0 || count > u16::MAX as usize {
        return Err(Error::param(format!("need 1 <= mu <= 65535, got {count}")));
    }
    Ok(())
}

/// `(r1, r2, p1, p2)`: collision probability above `p1` below distance `r1`,
/// below `p2` beyond distance `r2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LshParams {
    pub r1: f64,
    pub r2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl LshParams {
    pub fn new(r1: f64, r2: f64, p1: f64, p2: f64) -> Result<Self> {
        if !(r1 < r2) || !(p1 > p2) || !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
            return Err(Error::param(format!(
                "LSH parameters need r1 < r2 and 1 >= p1 > p2 >= 0, got ({r1}, {r2}, {p1}, {p2})"
            )));
        }
        Ok(Self { r1, r2, p1, p2 })
    }

    /// Parameters of a bit-sampling family under the BSC model, with `p1` and
    /// `p2` both collision probabilities.
    pub fn bit_sampling(r1: f64, r2: f64, n_bits: usize, digest_bits: usize) -> Result<Self> {
        Self::new(
            r1,
            r2,
            analytic_collision_prob(r1, n_bits, digest_bits)?,
            analytic_collision_prob(r2, n_bits, digest_bits)?,
        )
    }

    /// Mismatch probability for close pairs.
    pub fn eps1(&self) -> f64 {
        1.0 - self.p1
    }

    /// Collision probability for far pairs.
    pub fn eps2(&self) -> f64 {
        self.p2
    }
}

/// `(1 - r/N)^t`: per-function collision probability at expected distance `r`.
pub fn analytic_collision_prob(r: f64, n_bits: usize, digest_bits: usize) -> Result<f64> {
    if n_bits == 0 || !(0.0..=n_bits as f64).contains(&r) {
        return Err(Error::param(format!("distance {r} outside [0, {n_bits}]")));
    }
    Ok((1.0 - r / n_bits as f64).powi(digest_bits as i32))
}

/// Empirical `(ε1, ε2)` for a family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsEstimate {
    /// Mismatch rate for pairs at distance exactly `λ_min`.
    pub eps1: f64,
    /// Collision rate for pairs at distance exactly `λ_max`.
    pub eps2: f64,
}

/// Estimates `(ε1, ε2)` from `trials` random pairs at each threshold.
///
/// The mismatch probability of a bit-sampling function grows with distance,
/// so close pairs are drawn at exactly `λ_min` and far pairs at exactly
/// `λ_max`, the worst cases of their ranges. Rates are pooled over all `μ`
/// functions.
pub fn estimate_eps<R: Rng + ?Sized>(
    family: &LshFamily,
    lambda_min: usize,
    lambda_max: usize,
    trials: usize,
    rng: &mut R,
) -> Result<EpsEstimate> {
    if trials == 0 {
        return Err(Error::param("estimate_eps needs at least one trial"));
    }
    if lambda_min > family.n_bits || lambda_max > family.n_bits {
        return Err(Error::param("thresholds exceed N"));
    }
    let (mut mismatches, mut collisions) = (0u64, 0u64);
    for _ in 0..trials {
        let x = random_template(family.n_bits, rng)?;
        let near = perturb_exact(&x, lambda_min, rng)?;
        let far = perturb_exact(&x, lambda_max, rng)?;
        for i in 0..family.len() {
            mismatches += u64::from(!family.collides(i, &x, &near)?);
            collisions += u64::from(family.collides(i, &x, &far)?);
        }
    }
    let total = (trials * family.len()) as f64;
    Ok(EpsEstimate {
        eps1: mismatches as f64 / total,
        eps2: collisions as f64 / total,
    })
}
