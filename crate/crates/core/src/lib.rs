//! Error-tolerant search over an encrypted index of binary templates.
//!
//! Templates are hashed with bit-sampling LSH, and each LSH output is hashed
//! again into the buckets of a Bloom filter with storage. Buckets hold
//! ElGamal-encrypted tags. A receiver holding the secret key fetches
//! the buckets a probe hashes to and recovers the identifiers of stored
//! templates close to it.
//!
//! [`protocol`] ties the layers together; [`ident`] adds named enrolment and
//! verified identification on top.

pub mod bloom;
pub mod crypto;
pub mod error;
pub mod experiment;
pub mod ident;
pub mod lsh;
pub mod net;
pub mod pir;
pub mod protocol;
pub mod template;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/templates.md")]
    mod templates {}
    #[doc = include_str!("../../../book/src/lsh.md")]
    mod lsh {}
    #[doc = include_str!("../../../book/src/bloom.md")]
    mod bloom {}
    #[doc = include_str!("../../../book/src/crypto.md")]
    mod crypto {}
    #[doc = include_str!("../../../book/src/pir.md")]
    mod pir {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/identification.md")]
    mod identification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
