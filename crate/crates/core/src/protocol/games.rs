//! Harnesses for the three privacy experiments.
//!
//! Each experiment runs one honest operation against a fresh server built
//! from a fixed state and records every frame. The sender and receiver games
//! compare what the server saw; the symmetric game compares what the client
//! saw against the output of [`Simulator`].

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::client::{send, Receiver, Retrieval, SenderState};
use super::keys::PublicBundle;
use super::params::Mode;
use super::server::Server;
use super::state::{ServerState, Slot};
use crate::crypto::{self, Element, Exponent};
use crate::error::{Error, Result};
use crate::pir::{Channel, Frame, FrameKind, PayloadReader, QueryTransport, Recording, Transcript};
use crate::template::BinaryTemplate;

/// What to run inside [`capture_view`].
pub enum Operation<'a> {
    Send {
        x: &'a BinaryTemplate,
        bundle: &'a PublicBundle,
        sender: &'a SenderState,
    },
    Retrieve {
        x: &'a BinaryTemplate,
        receiver: &'a Receiver,
    },
}

/// The frames exchanged while running `op` against a copy of `state`.
/// `server_seed` fixes the server's blinding; `client_seed` fixes the
/// sender's randomness.
pub fn capture_view(op: Operation<'_>, state: &ServerState, server_seed: [u8; 32], client_seed: [u8; 32]) -> Result<Transcript> {
    let server = Server::new(state.clone(), server_seed);
    let mut rec = Recording::new(server.connect());
    match op {
        Operation::Send { x, bundle, sender } => {
            let mut sender = sender.clone();
            let mut rng = ChaCha20Rng::from_seed(client_seed);
            send(x, bundle, &mut sender, &mut rec, &mut rng)?;
        }
        Operation::Retrieve { x, receiver } => {
            receiver.retrieve(x, &mut rec)?;
        }
    }
    Ok(rec.into_parts().1)
}

/// Runs a retrieval against `ch` and returns the client's view along with
/// the result.
pub fn client_view<C: Channel>(receiver: &Receiver, x: &BinaryTemplate, ch: C) -> Result<(Retrieval, Transcript)> {
    let mut rec = Recording::new(ch);
    let out = receiver.retrieve(x, &mut rec)?;
    Ok((out, rec.into_parts().1))
}

/// Plays the server in the symmetric game knowing only the tags `Φ(x')`.
///
/// On RETRIEVE_BEGIN it learns how many distinct buckets will be queried and
/// splits every tag into that many shares under one fresh marker per tag.
/// Each bucket answer holds one share of every tag, with random padding in
/// the remaining slots, shuffled.
pub struct Simulator {
    bundle: PublicBundle,
    tags: BTreeSet<u64>,
    rng: ChaCha20Rng,
    plan: Vec<Vec<Slot>>,
    served: usize,
}

impl Simulator {
    pub fn new(bundle: PublicBundle, tags: BTreeSet<u64>, seed: [u8; 32]) -> Result<Self> {
        let p = &bundle.params;
        if p.mode != Mode::Extended || p.query_transport != QueryTransport::Direct {
            return Err(Error::param("the simulator needs the extended mode with direct queries"));
        }
        if tags.len() > p.bucket_capacity {
            return Err(Error::param("more tags than slots per bucket"));
        }
        Ok(Self {
            bundle,
            tags,
            rng: ChaCha20Rng::from_seed(seed),
            plan: Vec::new(),
            served: 0,
        })
    }

    fn begin(&mut self, d: usize) -> Result<Frame> {
        let p = &self.bundle.params;
        let g = p.group;
        let pk = &self.bundle.pk;
        if d == 0 || d > p.composite_size() {
            return Err(Error::Protocol(format!("cannot simulate {d} buckets")));
        }
        let c2: Exponent = g.random_nonzero_exponent(&mut self.rng);
        let base = g.pow_gen(&c2);
        let mut columns: Vec<Vec<(Element, Element)>> = vec![Vec::new(); d];
        for &tag in &self.tags {
            let marker = g.random_element(&mut self.rng);
            let shares = if d == 1 {
                vec![base.pow(&g.exponent(tag))]
            } else {
                crypto::raise(
                    crypto::split_secret(g, tag, d, p.tag_bits, &mut self.rng)?.shares(),
                    &c2,
                )
            };
            for (col, share) in columns.iter_mut().zip(shares) {
                col.push((marker, share));
            }
        }
        let rng = &mut self.rng;
        self.plan = columns
            .into_iter()
            .map(|col| {
                let mut slots: Vec<Slot> = col
                    .iter()
                    .map(|(m, s)| Slot {
                        marker: crypto::encrypt(pk, m, rng),
                        tag: crypto::encrypt(pk, s, rng),
                    })
                    .collect();
                while slots.len() < p.bucket_capacity {
                    slots.push(Slot::padding(pk, rng));
                }
                slots.shuffle(rng);
                slots
            })
            .collect();
        self.served = 0;
        Ok(Frame::new(FrameKind::RerandPub, base.encode()))
    }

    fn try_exchange(&mut self, request: Frame) -> Result<Frame> {
        let mut r = PayloadReader::new(&request.payload);
        match request.kind {
            FrameKind::Hello => {
                let h = self.bundle.header();
                let mut out = h.digest().to_vec();
                out.extend_from_slice(&h.to_bytes());
                Ok(Frame::new(FrameKind::Hello, out))
            }
            FrameKind::RetrieveBegin => {
                let d = r.u16()? as usize;
                r.finish()?;
                self.begin(d)
            }
            FrameKind::QueryDirect => {
                let alpha = r.u32()? as usize;
                r.finish()?;
                if alpha >= self.bundle.params.buckets {
                    return Err(Error::Protocol(format!("bucket {alpha} out of range")));
                }
                let slots = self
                    .plan
                    .get(self.served)
                    .ok_or_else(|| Error::Protocol("more queries than announced".into()))?;
                self.served += 1;
                Ok(Frame::new(FrameKind::RespBucket, slots.iter().flat_map(|s| s.encode()).collect()))
            }
            other => Err(Error::Protocol(format!("the simulator does not answer {other:?}"))),
        }
    }
}

impl Channel for Simulator {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        Ok(self
            .try_exchange(request)
            .unwrap_or_else(|e| crate::pir::error_frame(&e)))
    }
}
