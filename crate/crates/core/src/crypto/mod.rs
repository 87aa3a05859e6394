//! Group arithmetic, ElGamal, tag splitting, small discrete logs and the
//! payload cipher.

pub mod dlog;
pub mod elgamal;
pub mod group;
pub mod payload;
pub mod shares;

pub use dlog::{discrete_log_small, BsgsTable};
pub use elgamal::{decrypt, encrypt, encrypt_with, rerandomize, Ciphertext, Keypair, PublicKey, SecretKey};
pub use group::{Element, Exponent, FixedBase, GroupId};
pub use shares::{combine, raise, split_secret, TagShareSet};
