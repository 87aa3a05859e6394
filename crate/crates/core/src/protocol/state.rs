use std::collections::BTreeMap;
use std::path::Path;

use rand::{CryptoRng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::keys::{IndexHeader, PublicBundle, SecretBundle};
use super::params::SchemeParams;
use crate::bloom::{BloomKey, CompositeFamily};
use crate::crypto::{encrypt, Ciphertext, GroupId, Keypair, PublicKey};
use crate::error::{Error, Result};
use crate::lsh::LshFamily;
use crate::pir::wire::put_var_bytes;
use crate::pir::{BucketStore, PayloadReader};

const INDEX_MAGIC: &[u8; 4] = b"FESE";
const INDEX_VERSION: u16 = 1;

/// One bucket entry: a marker ciphertext and a tag ciphertext.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub marker: Ciphertext,
    pub tag: Ciphertext,
}

impl Slot {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * self.marker.y1.group().element_len());
        self.marker.encode_into(&mut out);
        self.tag.encode_into(&mut out);
        out
    }

    pub fn decode(group: GroupId, bytes: &[u8]) -> Result<Self> {
        let half = Ciphertext::encoded_len(group);
        if bytes.len() != 2 * half {
            return Err(Error::format("slot has the wrong width"));
        }
        Ok(Self {
            marker: Ciphertext::decode(group, &bytes[..half])?,
            tag: Ciphertext::decode(group, &bytes[half..])?,
        })
    }

    /// Encryptions of two uniformly random elements.
    pub fn padding<R: CryptoRng + ?Sized>(pk: &PublicKey, rng: &mut R) -> Self {
        let g = pk.group();
        let a = g.random_element(rng);
        let b = g.random_element(rng);
        Self {
            marker: encrypt(pk, &a, rng),
            tag: encrypt(pk, &b, rng),
        }
    }
}

/// Everything the server holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerState {
    pub header: IndexHeader,
    pub store: BucketStore,
    /// Sealed payloads by identifier.
    pub records: BTreeMap<u64, Vec<u8>>,
    pub next_id: u64,
}

impl ServerState {
    /// Every slot of every bucket filled with padding.
    pub fn padded<R: CryptoRng + ?Sized>(header: IndexHeader, pk: &PublicKey, rng: &mut R) -> Result<Self> {
        let p = &header.params;
        let mut image = Vec::with_capacity(p.buckets * p.bucket_capacity * p.slot_width());
        for _ in 0..p.buckets * p.bucket_capacity {
            image.extend_from_slice(&Slot::padding(pk, rng).encode());
        }
        let store = BucketStore::from_parts(p.buckets, p.bucket_capacity, p.slot_width(), 0, image)?;
        Ok(Self {
            header,
            store,
            records: BTreeMap::new(),
            next_id: 0,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.header.params
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = INDEX_MAGIC.to_vec();
        out.extend_from_slice(&INDEX_VERSION.to_be_bytes());
        put_var_bytes(&mut out, &self.header.to_bytes());
        out.extend_from_slice(&self.header.digest());
        out.extend_from_slice(&(self.store.buckets() as u32).to_be_bytes());
        out.extend_from_slice(&(self.store.capacity() as u16).to_be_bytes());
        out.extend_from_slice(&(self.store.slot_width() as u16).to_be_bytes());
        out.extend_from_slice(&self.store.generation().to_be_bytes());
        out.extend_from_slice(self.store.as_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_be_bytes());
        for (id, rec) in &self.records {
            out.extend_from_slice(&id.to_be_bytes());
            put_var_bytes(&mut out, rec);
        }
        out.extend_from_slice(&self.next_id.to_be_bytes());
        out
    }

    /// Parses an index image. Loading needs nothing beyond the bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(bytes);
        if r.bytes(4).ok() != Some(&INDEX_MAGIC[..]) {
            return Err(Error::format("not an index file"));
        }
        let version = r.u16()?;
        if version != INDEX_VERSION {
            return Err(Error::format(format!("unsupported index version {version}")));
        }
        let header = IndexHeader::read_from(&mut PayloadReader::new(r.var_bytes()?))?;
        if r.bytes(32)? != header.digest() {
            return Err(Error::format("index header digest does not match its contents"));
        }
        let (m, l, w) = (r.u32()? as usize, r.u16()? as usize, r.u16()? as usize);
        let p = &header.params;
        if (m, l, w) != (p.buckets, p.bucket_capacity, p.slot_width()) {
            return Err(Error::format("store geometry disagrees with the header"));
        }
        let generation = r.u64()?;
        let data = r.bytes(m * l * w)?.to_vec();
        let store = BucketStore::from_parts(m, l, w, generation, data)?;
        let count = r.u64()?;
        let mut records = BTreeMap::new();
        let mut last = None;
        for _ in 0..count {
            let id = r.u64()?;
            if last.is_some_and(|prev| prev >= id) {
                return Err(Error::format("records out of order"));
            }
            last = Some(id);
            records.insert(id, r.var_bytes()?.to_vec());
        }
        let next_id = r.u64()?;
        r.finish()?;
        if records.keys().next_back().is_some_and(|&id| id >= next_id) {
            return Err(Error::format("record identifier beyond the counter"));
        }
        Ok(Self {
            header,
            store,
            records,
            next_id,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Generates keys, hash functions and a padded server state. The same seed
/// always yields the same output.
pub fn keygen(params: &SchemeParams, seed: [u8; 32]) -> Result<(PublicBundle, SecretBundle, ServerState)> {
    params.validate()?;
    let mut rng = ChaCha20Rng::from_seed(seed);
    let kp = Keypair::generate(params.group, &mut rng);
    let lsh = LshFamily::build(params.n_bits, params.lsh_bits, params.lsh_functions, &mut rng)?;
    let key = BloomKey::random(&mut rng);
    let composite = CompositeFamily::new(lsh, params.bloom_functions, params.buckets, key)?;
    let public = PublicBundle {
        params: params.clone(),
        composite,
        pk: kp.public.clone(),
    };
    let state = ServerState::padded(public.header(), &kp.public, &mut rng)?;
    let secret = SecretBundle {
        public: public.clone(),
        sk: kp.secret,
    };
    Ok((public, secret, state))
}
