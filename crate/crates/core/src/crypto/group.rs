//! Prime-order groups.
//!
//! Two instantiations share one runtime interface. [`GroupId::Ristretto255`]
//! is the default. [`GroupId::Schnorr61`] is the order-`q` subgroup of
//! `Z_p^*` for the safe prime `p = 2q + 1 < 2^62`: it is cryptographically
//! worthless and exists so tests can afford exhaustive checks.

use std::fmt;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngExt};
use sha2::{Digest, Sha256, Sha512};

use crate::error::{Error, Result};

/// Order of the Schnorr61 subgroup.
pub const SCHNORR61_Q: u64 = 0x1fff_ffff_ffff_eb5d;
/// Modulus of the Schnorr61 group, `2q + 1`.
pub const SCHNORR61_P: u64 = 2 * SCHNORR61_Q + 1;
const SCHNORR61_G: u64 = 4;

const F_DOMAIN: &[u8] = b"etse/second-generator/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupId {
    Ristretto255,
    /// Insecure.
    Schnorr61,
}

impl GroupId {
    pub fn code(self) -> u8 {
        match self {
            GroupId::Ristretto255 => 1,
            GroupId::Schnorr61 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(GroupId::Ristretto255),
            2 => Ok(GroupId::Schnorr61),
            _ => Err(Error::format(format!("unknown group code {code}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupId::Ristretto255 => "ristretto255",
            GroupId::Schnorr61 => "schnorr61",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ristretto255" => Ok(GroupId::Ristretto255),
            "schnorr61" => Ok(GroupId::Schnorr61),
            _ => Err(Error::Config(format!("unknown group {name:?}"))),
        }
    }

    /// Width of an encoded element in bytes.
    pub fn element_len(self) -> usize {
        match self {
            GroupId::Ristretto255 => 32,
            GroupId::Schnorr61 => 8,
        }
    }

    pub fn is_secure(self) -> bool {
        self == GroupId::Ristretto255
    }

    pub fn identity(self) -> Element {
        match self {
            GroupId::Ristretto255 => Element::R(RistrettoPoint::identity()),
            GroupId::Schnorr61 => Element::S(1),
        }
    }

    /// `g`
    pub fn generator(self) -> Element {
        match self {
            GroupId::Ristretto255 => Element::R(curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT),
            GroupId::Schnorr61 => Element::S(SCHNORR61_G),
        }
    }

    /// `f`, a generator whose logarithm to base `g` nobody knows.
    pub fn second_generator(self) -> Element {
        self.hash_to_element(F_DOMAIN)
    }

    /// `g^e`
    pub fn pow_gen(self, e: &Exponent) -> Element {
        match (self, e) {
            (GroupId::Ristretto255, Exponent::R(s)) => Element::R(s * RISTRETTO_BASEPOINT_TABLE),
            (GroupId::Schnorr61, Exponent::S(s)) => Element::S(powmod(SCHNORR61_G, *s)),
            _ => mixed(),
        }
    }

    pub fn exponent(self, v: u64) -> Exponent {
        match self {
            GroupId::Ristretto255 => Exponent::R(Scalar::from(v)),
            GroupId::Schnorr61 => Exponent::S(v % SCHNORR61_Q),
        }
    }

    pub fn random_exponent<R: CryptoRng + ?Sized>(self, rng: &mut R) -> Exponent {
        match self {
            GroupId::Ristretto255 => Exponent::R(Scalar::random(rng)),
            GroupId::Schnorr61 => Exponent::S(rng.random_range(0..SCHNORR61_Q)),
        }
    }

    /// Uniform exponent in `[1, q-1]`.
    pub fn random_nonzero_exponent<R: CryptoRng + ?Sized>(self, rng: &mut R) -> Exponent {
        loop {
            let e = self.random_exponent(rng);
            if !e.is_zero() {
                return e;
            }
        }
    }

    pub fn random_element<R: CryptoRng + ?Sized>(self, rng: &mut R) -> Element {
        match self {
            GroupId::Ristretto255 => Element::R(RistrettoPoint::random(rng)),
            GroupId::Schnorr61 => self.pow_gen(&self.random_exponent(rng)),
        }
    }

    pub fn hash_to_element(self, data: &[u8]) -> Element {
        match self {
            GroupId::Ristretto255 => Element::R(RistrettoPoint::hash_from_bytes::<Sha512>(data)),
            GroupId::Schnorr61 => {
                for counter in 0u32.. {
                    let mut h = Sha256::new();
                    h.update(b"etse/schnorr61/h2g");
                    h.update(counter.to_be_bytes());
                    h.update(data);
                    let d = h.finalize();
                    let wide = u128::from_be_bytes(d[..16].try_into().unwrap());
                    let x = (wide % SCHNORR61_P as u128) as u64;
                    if x != 0 {
                        return Element::S(mulmod(x, x));
                    }
                }
                unreachable!()
            }
        }
    }

    pub fn decode(self, bytes: &[u8]) -> Result<Element> {
        if bytes.len() != self.element_len() {
            return Err(Error::NotInGroup);
        }
        match self {
            GroupId::Ristretto255 => CompressedRistretto::from_slice(bytes)
                .ok()
                .and_then(|c| c.decompress())
                .map(Element::R)
                .ok_or(Error::NotInGroup),
            GroupId::Schnorr61 => {
                let x = u64::from_be_bytes(bytes.try_into().unwrap());
                if x == 0 || x >= SCHNORR61_P || powmod(x, SCHNORR61_Q) != 1 {
                    return Err(Error::NotInGroup);
                }
                Ok(Element::S(x))
            }
        }
    }

    pub fn exponent_len(self) -> usize {
        match self {
            GroupId::Ristretto255 => 32,
            GroupId::Schnorr61 => 8,
        }
    }

    pub fn decode_exponent(self, bytes: &[u8]) -> Result<Exponent> {
        match self {
            GroupId::Ristretto255 => {
                let arr: [u8; 32] = bytes.try_into().map_err(|_| Error::format("exponent must be 32 bytes"))?;
                Option::from(Scalar::from_canonical_bytes(arr))
                    .map(Exponent::R)
                    .ok_or_else(|| Error::format("non-canonical exponent"))
            }
            GroupId::Schnorr61 => {
                let arr: [u8; 8] = bytes.try_into().map_err(|_| Error::format("exponent must be 8 bytes"))?;
                let v = u64::from_be_bytes(arr);
                if v >= SCHNORR61_Q {
                    return Err(Error::format("non-canonical exponent"));
                }
                Ok(Exponent::S(v))
            }
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cold]
fn mixed() -> ! {
    panic!("operands belong to different groups")
}

fn mulmod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % SCHNORR61_P as u128) as u64
}

fn powmod(mut base: u64, mut e: u64) -> u64 {
    let mut acc = 1u64;
    base %= SCHNORR61_P;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, base);
        }
        base = mulmod(base, base);
        e >>= 1;
    }
    acc
}

fn q_add(a: u64, b: u64) -> u64 {
    ((a as u128 + b as u128) % SCHNORR61_Q as u128) as u64
}

fn q_mul(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % SCHNORR61_Q as u128) as u64
}

/// A group element, written multiplicatively.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Element {
    R(RistrettoPoint),
    S(u64),
}

impl Element {
    pub fn group(&self) -> GroupId {
        match self {
            Element::R(_) => GroupId::Ristretto255,
            Element::S(_) => GroupId::Schnorr61,
        }
    }

    /// `self · other`
    pub fn op(&self, other: &Element) -> Element {
        match (self, other) {
            (Element::R(a), Element::R(b)) => Element::R(a + b),
            (Element::S(a), Element::S(b)) => Element::S(mulmod(*a, *b)),
            _ => mixed(),
        }
    }

    pub fn inverse(&self) -> Element {
        match self {
            Element::R(a) => Element::R(-a),
            Element::S(a) => Element::S(powmod(*a, SCHNORR61_P - 2)),
        }
    }

    /// `self^e`
    pub fn pow(&self, e: &Exponent) -> Element {
        match (self, e) {
            (Element::R(a), Exponent::R(s)) => Element::R(a * s),
            (Element::S(a), Exponent::S(s)) => Element::S(powmod(*a, *s)),
            _ => mixed(),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == self.group().identity()
    }

    /// Canonical fixed-width encoding.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Element::R(a) => a.compress().to_bytes().to_vec(),
            Element::S(a) => a.to_be_bytes().to_vec(),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Element::R(a) => out.extend_from_slice(a.compress().as_bytes()),
            Element::S(a) => out.extend_from_slice(&a.to_be_bytes()),
        }
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = self.encode();
        write!(f, "Element({}:", self.group())?;
        for b in &bytes[..bytes.len().min(6)] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// An exponent modulo the group order `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    R(Scalar),
    S(u64),
}

impl Exponent {
    pub fn is_zero(&self) -> bool {
        match self {
            Exponent::R(s) => *s == Scalar::ZERO,
            Exponent::S(s) => *s == 0,
        }
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        match (self, other) {
            (Exponent::R(a), Exponent::R(b)) => Exponent::R(a + b),
            (Exponent::S(a), Exponent::S(b)) => Exponent::S(q_add(*a, *b)),
            _ => mixed(),
        }
    }

    pub fn mul(&self, other: &Exponent) -> Exponent {
        match (self, other) {
            (Exponent::R(a), Exponent::R(b)) => Exponent::R(a * b),
            (Exponent::S(a), Exponent::S(b)) => Exponent::S(q_mul(*a, *b)),
            _ => mixed(),
        }
    }

    pub fn neg(&self) -> Exponent {
        match self {
            Exponent::R(a) => Exponent::R(-a),
            Exponent::S(a) => Exponent::S((SCHNORR61_Q - a) % SCHNORR61_Q),
        }
    }

    /// Multiplicative inverse modulo `q`; `None` for zero.
    pub fn invert(&self) -> Option<Exponent> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Exponent::R(a) => Exponent::R(a.invert()),
            Exponent::S(a) => {
                let mut acc = 1u64;
                let mut base = *a;
                let mut e = SCHNORR61_Q - 2;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = q_mul(acc, base);
                    }
                    base = q_mul(base, base);
                    e >>= 1;
                }
                Exponent::S(acc)
            }
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Exponent::R(a) => a.to_bytes().to_vec(),
            Exponent::S(a) => a.to_be_bytes().to_vec(),
        }
    }
}

/// Precomputed powers of one element, for repeated exponentiation of a
/// fixed base such as a public key.
pub enum FixedBase {
    R(Box<RistrettoBasepointTable>),
    S(u64),
}

impl FixedBase {
    pub fn new(base: &Element) -> Self {
        match base {
            Element::R(p) => FixedBase::R(Box::new(RistrettoBasepointTable::create(p))),
            Element::S(x) => FixedBase::S(*x),
        }
    }

    pub fn pow(&self, e: &Exponent) -> Element {
        match (self, e) {
            (FixedBase::R(t), Exponent::R(s)) => Element::R(s * t.as_ref()),
            (FixedBase::S(x), Exponent::S(s)) => Element::S(powmod(*x, *s)),
            _ => mixed(),
        }
    }
}

impl fmt::Debug for FixedBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FixedBase(..)")
    }
}
