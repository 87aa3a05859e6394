//! Public-key encryption of byte strings.
//!
//! A fresh `g^r` encapsulates the key `SHA-256(g^r ∥ h^r)` for
//! ChaCha20-Poly1305. Each key is used once, so the nonce is fixed.

use chacha20poly1305::aead::Aead;
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};
use rand::CryptoRng;
use sha2::{Digest, Sha256};

use super::elgamal::{PublicKey, SecretKey};
use super::group::{Element, GroupId};
use crate::error::{Error, Result};

const KDF_DOMAIN: &[u8] = b"etse/payload/v1";
const TAG_LEN: usize = 16;

fn cipher(ephemeral: &Element, shared: &Element) -> ChaCha20Poly1305 {
    let mut h = Sha256::new();
    h.update(KDF_DOMAIN);
    h.update(ephemeral.encode());
    h.update(shared.encode());
    ChaCha20Poly1305::new_from_slice(&h.finalize()).expect("32-byte key")
}

/// Length of the ciphertext for an `n`-byte plaintext.
pub fn sealed_len(group: GroupId, n: usize) -> usize {
    group.element_len() + n + TAG_LEN
}

pub fn seal<R: CryptoRng + ?Sized>(pk: &PublicKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let group = pk.group();
    let r = group.random_nonzero_exponent(rng);
    let ephemeral = group.pow_gen(&r);
    let shared = pk.element().pow(&r);
    let body = cipher(&ephemeral, &shared)
        .encrypt(&Nonce::default(), plaintext)
        .expect("in-memory encryption");
    let mut out = ephemeral.encode();
    out.extend_from_slice(&body);
    out
}

pub fn open(sk: &SecretKey, ciphertext: &[u8]) -> Result<Vec<u8>> {
    let group = sk.group();
    let w = group.element_len();
    if ciphertext.len() < w + TAG_LEN {
        return Err(Error::Decryption);
    }
    let ephemeral = group.decode(&ciphertext[..w]).map_err(|_| Error::Decryption)?;
    let shared = ephemeral.pow(sk.exponent());
    cipher(&ephemeral, &shared)
        .decrypt(&Nonce::default(), &ciphertext[w..])
        .map_err(|_| Error::Decryption)
}
