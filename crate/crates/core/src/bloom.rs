//! Bloom filters with storage, and their composition with LSH.
//!
//! A Bloom filter with storage keeps `m` buckets of tags instead of `m` bits.
//! Inserting an element adds its tag to every bucket its hashes address;
//! looking an element up intersects those buckets. Composing with an LSH
//! family gives the `μ·ν` functions `h'_j(h_i(x) ∥ i)`, so that templates that
//! agree under the LSH functions address the same buckets.

use std::collections::{BTreeMap, BTreeSet};

use hmac::{Hmac, KeyInit, Mac};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lsh::LshFamily;
use crate::template::BinaryTemplate;

const BLOOM_DOMAIN: &[u8] = b"etse/bloom/v1";

/// Secret key selecting one member of the pseudo-random Bloom family.
#[derive(Clone, PartialEq, Eq)]
pub struct BloomKey([u8; 32]);

impl BloomKey {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// One-way digest of the key, safe to publish in index headers.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"etse/bloom-key-fingerprint");
        h.update(self.0);
        h.finalize().into()
    }
}

impl std::fmt::Debug for BloomKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BloomKey({:02x}{:02x}..)", self.0[0], self.0[1])
    }
}

/// `h'_j(y)`: HMAC-SHA256 under `key`, domain-separated by `j`, reduced
/// modulo `m` from its first 64 bits.
pub fn bloom_hash(key: &BloomKey, j: usize, y: &[u8], m: usize) -> usize {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&key.0).expect("HMAC takes any key length");
    mac.update(BLOOM_DOMAIN);
    mac.update(&(j as u16).to_be_bytes());
    mac.update(y);
    let out = mac.finalize().into_bytes();
    let word = u64::from_be_bytes(out[..8].try_into().unwrap());
    (word % m as u64) as usize
}

/// The `μ·ν` composite functions `h^c_(j,i)(x) = h'_j(h_i(x) ∥ i)`.
///
/// Composite functions are enumerated as `k = i·ν + j`: all Bloom functions
/// of LSH function 0 first, then those of LSH function 1, and so on.
#[derive(Clone, Debug)]
pub struct CompositeFamily {
    lsh: LshFamily,
    nu: usize,
    m: usize,
    key: BloomKey,
}

impl CompositeFamily {
    pub fn new(lsh: LshFamily, nu: usize, m: usize, key: BloomKey) -> Result<Self> {
        if nu == 0 || m == 0 || nu > m {
            return Err(Error::param(format!("need 1 <= nu <= m, got nu = {nu}, m = {m}")));
        }
        if lsh.len() * nu > u16::MAX as usize {
            return Err(Error::param("mu * nu must fit in 16 bits"));
        }
        Ok(Self { lsh, nu, m, key })
    }

    pub fn lsh(&self) -> &LshFamily {
        &self.lsh
    }

    /// `ν`
    pub fn bloom_count(&self) -> usize {
        self.nu
    }

    /// `m`
    pub fn buckets(&self) -> usize {
        self.m
    }

    pub fn key(&self) -> &BloomKey {
        &self.key
    }

    /// `|H^c| = μ·ν`
    pub fn size(&self) -> usize {
        self.lsh.len() * self.nu
    }

    /// `h^c_(j,i)(x)`
    pub fn eval(&self, j: usize, i: usize, x: &BinaryTemplate) -> Result<usize> {
        if j >= self.nu {
            return Err(Error::param(format!("Bloom function index {j} out of range")));
        }
        let digest = self.lsh.eval(i, x)?;
        Ok(self.hash_digest(j, i, digest.as_bytes()))
    }

    fn hash_digest(&self, j: usize, i: usize, digest: &[u8]) -> usize {
        let mut y = Vec::with_capacity(digest.len() + 2);
        y.extend_from_slice(digest);
        y.extend_from_slice(&(i as u16).to_be_bytes());
        bloom_hash(&self.key, j, &y, self.m)
    }

    /// Every composite index of `x`, in `k = i·ν + j` order.
    pub fn indices(&self, x: &BinaryTemplate) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.size());
        for i in 0..self.lsh.len() {
            let digest = self.lsh.eval(i, x)?;
            for j in 0..self.nu {
                out.push(self.hash_digest(j, i, digest.as_bytes()));
            }
        }
        Ok(out)
    }

    /// Number of LSH groups a threshold `τ` demands: `⌈τ/ν⌉`.
    pub fn groups_needed(&self, tau: usize) -> Result<usize> {
        groups_needed(self.lsh.len(), self.nu, tau)
    }
}

pub(crate) fn groups_needed(mu: usize, nu: usize, tau: usize) -> Result<usize> {
    if tau == 0 || tau > mu * nu {
        return Err(Error::param(format!("threshold {tau} outside 1..={}", mu * nu)));
    }
    Ok(tau.div_ceil(nu))
}

/// Applies the lookup rule to the bucket contents addressed by one query.
///
/// `sets[k]` is the content of the bucket addressed by composite function
/// `k = i·ν + j`. An LSH group `i` supports a tag when all `ν` of its buckets
/// hold it; tags supported by at least `⌈τ/ν⌉` groups are returned. With
/// `τ = μ·ν` this is the plain intersection of all addressed buckets.
pub fn select_by_threshold<T: Ord + Clone>(sets: &[&BTreeSet<T>], nu: usize, tau: usize) -> Result<BTreeSet<T>> {
    if nu == 0 || sets.len() % nu != 0 {
        return Err(Error::param("bucket list is not a whole number of LSH groups"));
    }
    let mu = sets.len() / nu;
    let needed = groups_needed(mu, nu, tau)?;
    if needed == mu {
        return Ok(intersect_all(sets));
    }
    let mut support: BTreeMap<T, usize> = BTreeMap::new();
    for group in sets.chunks(nu) {
        for tag in intersect_all(group) {
            *support.entry(tag).or_insert(0) += 1;
        }
    }
    Ok(support
        .into_iter()
        .filter(|&(_, c)| c >= needed)
        .map(|(t, _)| t)
        .collect())
}

fn intersect_all<T: Ord + Clone>(sets: &[&BTreeSet<T>]) -> BTreeSet<T> {
    let Some((smallest, _)) = sets.iter().enumerate().min_by_key(|(_, s)| s.len()) else {
        return BTreeSet::new();
    };
    sets[smallest]
        .iter()
        .filter(|t| sets.iter().all(|s| s.contains(t)))
        .cloned()
        .collect()
}

/// Opaque per-element token stored in buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(pub u64);

/// Plaintext Bloom filter with storage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BfsStructure {
    buckets: Vec<BTreeSet<Tag>>,
    capacity: Option<usize>,
}

impl BfsStructure {
    /// `m` empty buckets of unbounded size.
    pub fn new(m: usize) -> Self {
        Self {
            buckets: vec![BTreeSet::new(); m],
            capacity: None,
        }
    }

    /// `m` empty buckets holding at most `capacity` tags each.
    pub fn with_capacity(m: usize, capacity: usize) -> Self {
        Self {
            buckets: vec![BTreeSet::new(); m],
            capacity: Some(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn bucket(&self, alpha: usize) -> &BTreeSet<Tag> {
        &self.buckets[alpha]
    }

    /// `T_α ← T_α ∪ {tag}` for every given `α`. Nothing changes if any
    /// bucket would overflow.
    pub fn insert_at(&mut self, alphas: &[usize], tag: Tag) -> Result<()> {
        if let Some(&bad) = alphas.iter().find(|&&a| a >= self.buckets.len()) {
            return Err(Error::param(format!("bucket index {bad} out of range")));
        }
        if let Some(cap) = self.capacity {
            if let Some(&a) = alphas
                .iter()
                .find(|&&a| !self.buckets[a].contains(&tag) && self.buckets[a].len() >= cap)
            {
                return Err(Error::Overflow { bucket: a });
            }
        }
        for &a in alphas {
            self.buckets[a].insert(tag);
        }
        Ok(())
    }

    /// `∩ T_α` over the given `α`.
    pub fn intersect(&self, alphas: &[usize]) -> BTreeSet<Tag> {
        let sets: Vec<&BTreeSet<Tag>> = alphas.iter().map(|&a| &self.buckets[a]).collect();
        intersect_all(&sets)
    }

    /// Whether every addressed bucket is non-empty: the classical Bloom
    /// membership test.
    pub fn all_occupied(&self, alphas: &[usize]) -> bool {
        alphas.iter().all(|&a| !self.buckets[a].is_empty())
    }

    fn check_family(&self, comp: &CompositeFamily) -> Result<()> {
        if comp.buckets() != self.buckets.len() {
            return Err(Error::param(format!(
                "family addresses {} buckets, structure has {}",
                comp.buckets(),
                self.buckets.len()
            )));
        }
        Ok(())
    }

    /// Indexes `x` under `tag` in all `μ·ν` composite buckets.
    pub fn add(&mut self, comp: &CompositeFamily, x: &BinaryTemplate, tag: Tag) -> Result<()> {
        self.check_family(comp)?;
        let alphas = comp.indices(x)?;
        self.insert_at(&alphas, tag)
    }

    /// Tags retrieved for the query `x` at threshold `τ`.
    pub fn lookup(&self, comp: &CompositeFamily, x: &BinaryTemplate, tau: usize) -> Result<BTreeSet<Tag>> {
        self.check_family(comp)?;
        let alphas = comp.indices(x)?;
        let sets: Vec<&BTreeSet<Tag>> = alphas.iter().map(|&a| &self.buckets[a]).collect();
        select_by_threshold(&sets, comp.bloom_count(), tau)
    }
}

/// `(1 - (1 - ν/m)^|D|)^ν`: chance that all `ν` buckets addressed by an
/// element outside `D` are already occupied.
pub fn false_positive_probability(nu: usize, m: usize, d_size: usize) -> Result<f64> {
    if nu == 0 || nu > m {
        return Err(Error::param(format!("need 1 <= nu <= m, got nu = {nu}, m = {m}")));
    }
    let empty = (1.0 - nu as f64 / m as f64).powi(d_size as i32);
    Ok((1.0 - empty).powi(nu as i32))
}

/// Guarantees of the composite construction for given LSH error rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeBounds {
    /// Upper bound on retrieving a far element: `(ε2 + (1-ε2)/m)^|H^c|`.
    pub soundness: f64,
    /// Upper bound on missing a close element: `1 - (1-ε1)^|H^c|`.
    pub completeness_failure: f64,
}

pub fn composite_bounds(eps1: f64, eps2: f64, m: usize, hc_size: usize) -> Result<CompositeBounds> {
    if !(0.0..=1.0).contains(&eps1) || !(0.0..=1.0).contains(&eps2) || m == 0 {
        return Err(Error::param("error rates must lie in [0, 1] and m must be positive"));
    }
    let n = hc_size as i32;
    Ok(CompositeBounds {
        soundness: (eps2 + (1.0 - eps2) / m as f64).powi(n),
        completeness_failure: 1.0 - (1.0 - eps1).powi(n),
    })
}
