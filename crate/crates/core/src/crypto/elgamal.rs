//! ElGamal over a prime-order group.

use std::sync::OnceLock;

use rand::CryptoRng;

use super::group::{Element, Exponent, FixedBase, GroupId};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SecretKey {
    group: GroupId,
    v: Exponent,
}

impl SecretKey {
    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn exponent(&self) -> &Exponent {
        &self.v
    }

    pub fn from_exponent(group: GroupId, v: Exponent) -> Result<Self> {
        if v.is_zero() {
            return Err(Error::DegenerateExponent);
        }
        Ok(Self { group, v })
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey::new(self.group.pow_gen(&self.v))
    }
}

/// `h = g^v`, with a lazily built table for fast `h^r`.
#[derive(Debug)]
pub struct PublicKey {
    h: Element,
    table: OnceLock<FixedBase>,
}

impl Clone for PublicKey {
    fn clone(&self) -> Self {
        Self::new(self.h)
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h
    }
}

impl Eq for PublicKey {}

impl PublicKey {
    pub fn new(h: Element) -> Self {
        Self {
            h,
            table: OnceLock::new(),
        }
    }

    pub fn group(&self) -> GroupId {
        self.h.group()
    }

    pub fn element(&self) -> &Element {
        &self.h
    }

    fn pow_h(&self, r: &Exponent) -> Element {
        self.table.get_or_init(|| FixedBase::new(&self.h)).pow(r)
    }
}

#[derive(Clone, Debug)]
pub struct Keypair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

impl Keypair {
    pub fn generate<R: CryptoRng + ?Sized>(group: GroupId, rng: &mut R) -> Self {
        let v = group.random_nonzero_exponent(rng);
        let secret = SecretKey { group, v };
        let public = secret.public_key();
        Self { secret, public }
    }
}

/// `(y1, y2) = (g^r, h^r · x)`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub y1: Element,
    pub y2: Element,
}

impl Ciphertext {
    /// Componentwise product; decrypts to the product of the plaintexts.
    pub fn mul(&self, other: &Ciphertext) -> Ciphertext {
        Ciphertext {
            y1: self.y1.op(&other.y1),
            y2: self.y2.op(&other.y2),
        }
    }

    /// Componentwise power; decrypts to `x^e`.
    pub fn pow(&self, e: &Exponent) -> Result<Ciphertext> {
        if e.is_zero() {
            return Err(Error::DegenerateExponent);
        }
        Ok(Ciphertext {
            y1: self.y1.pow(e),
            y2: self.y2.pow(e),
        })
    }

    /// `y1 ∥ y2`
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        self.y1.encode_into(out);
        self.y2.encode_into(out);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 * self.y1.group().element_len());
        self.encode_into(&mut out);
        out
    }

    pub fn decode(group: GroupId, bytes: &[u8]) -> Result<Ciphertext> {
        let w = group.element_len();
        if bytes.len() != 2 * w {
            return Err(Error::format(format!("ciphertext must be {} bytes", 2 * w)));
        }
        Ok(Ciphertext {
            y1: group.decode(&bytes[..w])?,
            y2: group.decode(&bytes[w..])?,
        })
    }

    pub fn encoded_len(group: GroupId) -> usize {
        2 * group.element_len()
    }
}

pub fn encrypt<R: CryptoRng + ?Sized>(pk: &PublicKey, x: &Element, rng: &mut R) -> Ciphertext {
    let r = pk.group().random_exponent(rng);
    encrypt_with(pk, x, &r)
}

/// Encryption with caller-chosen randomness `r`.
pub fn encrypt_with(pk: &PublicKey, x: &Element, r: &Exponent) -> Ciphertext {
    Ciphertext {
        y1: pk.group().pow_gen(r),
        y2: pk.pow_h(r).op(x),
    }
}

pub fn decrypt(sk: &SecretKey, c: &Ciphertext) -> Element {
    c.y2.op(&c.y1.pow(&sk.v).inverse())
}

/// Fresh ciphertext of the same plaintext: `c · Enc(1)`.
pub fn rerandomize<R: CryptoRng + ?Sized>(pk: &PublicKey, c: &Ciphertext, rng: &mut R) -> Ciphertext {
    c.mul(&encrypt(pk, &pk.group().identity(), rng))
}
