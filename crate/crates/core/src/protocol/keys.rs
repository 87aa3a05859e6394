use sha2::{Digest, Sha256};

use super::params::SchemeParams;
use crate::bloom::{BloomKey, CompositeFamily};
use crate::crypto::{GroupId, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::lsh::LshFamily;
use crate::pir::wire::put_var_bytes;
use crate::pir::PayloadReader;

const PUBLIC_MAGIC: &[u8; 4] = b"FEPK";
const SECRET_MAGIC: &[u8; 4] = b"FESK";
const BUNDLE_VERSION: u16 = 1;

/// What the server may know about a deployment: parameters, the LSH
/// family and a fingerprint of the Bloom key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexHeader {
    pub params: SchemeParams,
    pub lsh: LshFamily,
    pub key_fingerprint: [u8; 32],
}

impl IndexHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_var_bytes(&mut out, &self.params.to_bytes());
        put_var_bytes(&mut out, &self.lsh.to_bytes());
        out.extend_from_slice(&self.key_fingerprint);
        out
    }

    pub fn read_from(r: &mut PayloadReader<'_>) -> Result<Self> {
        let params = SchemeParams::from_bytes(r.var_bytes()?)?;
        let lsh_bytes = r.var_bytes()?;
        let (lsh, used) = LshFamily::from_bytes(params.n_bits, lsh_bytes)?;
        if used != lsh_bytes.len() {
            return Err(Error::format("trailing bytes after LSH descriptor"));
        }
        if lsh.len() != params.lsh_functions || lsh.digest_bits() != params.lsh_bits {
            return Err(Error::format("LSH descriptor disagrees with parameters"));
        }
        let key_fingerprint = r.bytes(32)?.try_into().unwrap();
        Ok(Self {
            params,
            lsh,
            key_fingerprint,
        })
    }

    /// Guards against peers built from different parameters or keys.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"etse/header/v1");
        h.update(self.to_bytes());
        h.finalize().into()
    }
}

/// Material for senders: parameters, hash functions and the encryption key.
#[derive(Clone, Debug)]
pub struct PublicBundle {
    pub params: SchemeParams,
    pub composite: CompositeFamily,
    pub pk: PublicKey,
}

impl PublicBundle {
    pub fn header(&self) -> IndexHeader {
        IndexHeader {
            params: self.params.clone(),
            lsh: self.composite.lsh().clone(),
            key_fingerprint: self.composite.key().fingerprint(),
        }
    }

    pub fn group(&self) -> GroupId {
        self.params.group
    }

    fn write_body(&self, out: &mut Vec<u8>) {
        put_var_bytes(out, &self.params.to_bytes());
        put_var_bytes(out, &self.composite.lsh().to_bytes());
        out.extend_from_slice(self.composite.key().as_bytes());
        put_var_bytes(out, &self.pk.element().encode());
    }

    fn read_body(r: &mut PayloadReader<'_>) -> Result<Self> {
        let params = SchemeParams::from_bytes(r.var_bytes()?)?;
        let lsh_bytes = r.var_bytes()?;
        let (lsh, used) = LshFamily::from_bytes(params.n_bits, lsh_bytes)?;
        if used != lsh_bytes.len() || lsh.len() != params.lsh_functions || lsh.digest_bits() != params.lsh_bits {
            return Err(Error::format("LSH descriptor disagrees with parameters"));
        }
        let key = BloomKey::from_bytes(r.bytes(32)?.try_into().unwrap());
        let composite = CompositeFamily::new(lsh, params.bloom_functions, params.buckets, key)?;
        let pk = PublicKey::new(params.group.decode(r.var_bytes()?)?);
        Ok(Self { params, composite, pk })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = PUBLIC_MAGIC.to_vec();
        out.extend_from_slice(&BUNDLE_VERSION.to_be_bytes());
        self.write_body(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(bytes);
        check_magic(&mut r, PUBLIC_MAGIC)?;
        let b = Self::read_body(&mut r)?;
        r.finish()?;
        Ok(b)
    }
}

/// Material for receivers: the public bundle plus the decryption key.
#[derive(Clone, Debug)]
pub struct SecretBundle {
    pub public: PublicBundle,
    pub sk: SecretKey,
}

impl SecretBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = SECRET_MAGIC.to_vec();
        out.extend_from_slice(&BUNDLE_VERSION.to_be_bytes());
        self.public.write_body(&mut out);
        put_var_bytes(&mut out, &self.sk.exponent().encode());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = PayloadReader::new(bytes);
        check_magic(&mut r, SECRET_MAGIC)?;
        let public = PublicBundle::read_body(&mut r)?;
        let group = public.params.group;
        let sk = SecretKey::from_exponent(group, group.decode_exponent(r.var_bytes()?)?)?;
        r.finish()?;
        if sk.public_key() != public.pk {
            return Err(Error::format("secret key does not match the public key"));
        }
        Ok(Self { public, sk })
    }
}

fn check_magic(r: &mut PayloadReader<'_>, magic: &[u8; 4]) -> Result<()> {
    if r.bytes(4).ok() != Some(&magic[..]) {
        return Err(Error::format(format!(
            "not a {} file",
            String::from_utf8_lossy(magic)
        )));
    }
    let v = r.u16()?;
    if v != BUNDLE_VERSION {
        return Err(Error::format(format!("unsupported version {v}")));
    }
    Ok(())
}
