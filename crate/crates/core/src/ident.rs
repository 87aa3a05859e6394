//! Biometric identification on top of the protocol.
//!
//! The identity provider enrols a reference template by sending it, and
//! keeps the pseudo-identity next to the returned identifier in a local
//! registry the server never sees. Identification retrieves candidate
//! identifiers, fetches and decrypts their references, and verifies each
//! one by Hamming distance.

use std::collections::BTreeMap;
use std::path::Path;

use rand::CryptoRng;
use serde::{Deserialize, Serialize};

use crate::crypto::payload;
use crate::error::{Error, Result};
use crate::pir::Channel;
use crate::protocol::{fetch_records, send, OpCounts, PublicBundle, Receiver, SenderState};
use crate::template::{hamming_distance, BinaryTemplate};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrolledUser {
    pub pseudo_identity: String,
    pub identifier: u64,
}

/// The identity provider's local bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub users: Vec<EnrolledUser>,
    pub sender: SenderState,
}

impl Registry {
    pub fn new(buckets: usize) -> Self {
        Self {
            users: Vec::new(),
            sender: SenderState::new(buckets),
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn identity_of(&self, identifier: u64) -> Option<&str> {
        self.users
            .iter()
            .find(|u| u.identifier == identifier)
            .map(|u| u.pseudo_identity.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format(format!("registry: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Sends `b` and records `id` against the identifier the server assigned.
pub fn enroll<C: Channel + ?Sized, R: CryptoRng + ?Sized>(
    id: &str,
    b: &BinaryTemplate,
    bundle: &PublicBundle,
    registry: &mut Registry,
    ch: &mut C,
    rng: &mut R,
) -> Result<EnrolledUser> {
    let identifier = send(b, bundle, &mut registry.sender, ch, rng)?;
    let user = EnrolledUser {
        pseudo_identity: id.to_owned(),
        identifier,
    };
    registry.users.push(user.clone());
    Ok(user)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    /// `None` when the identifier is not in this registry.
    pub pseudo_identity: Option<String>,
    pub identifier: u64,
    pub verified: bool,
    pub distance: usize,
    /// The decrypted reference, kept only on request.
    pub template: Option<BinaryTemplate>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Identification {
    /// Every retrieved identifier, verified or not, in identifier order.
    pub candidates: Vec<Candidate>,
    pub counts: OpCounts,
    pub records_fetched: u64,
}

impl Identification {
    /// The final answer: candidates that passed verification.
    pub fn matches(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.verified)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IdentifyOptions {
    pub keep_templates: bool,
}

pub fn identify<C: Channel + ?Sized>(
    probe: &BinaryTemplate,
    receiver: &Receiver,
    registry: &Registry,
    ch: &mut C,
    opts: IdentifyOptions,
) -> Result<Identification> {
    let bundle = receiver.bundle();
    let params = &bundle.public.params;
    let retrieval = receiver.retrieve(probe, &mut *ch)?;
    if retrieval.identifiers.is_empty() {
        return Ok(Identification {
            counts: retrieval.counts,
            ..Identification::default()
        });
    }
    let records: BTreeMap<u64, Vec<u8>> = fetch_records(&mut *ch, params.query_transport, &retrieval.identifiers)?;
    let mut candidates = Vec::with_capacity(records.len());
    for (&identifier, sealed) in &records {
        let reference = BinaryTemplate::from_file_bytes(&payload::open(&bundle.sk, sealed)?)?;
        let distance = hamming_distance(probe, &reference)?;
        candidates.push(Candidate {
            pseudo_identity: registry.identity_of(identifier).map(str::to_owned),
            identifier,
            verified: distance <= params.lambda_min,
            distance,
            template: opts.keep_templates.then_some(reference),
        });
    }
    Ok(Identification {
        records_fetched: records.len() as u64,
        candidates,
        counts: retrieval.counts,
    })
}
