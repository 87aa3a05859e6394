use std::sync::{Mutex, RwLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::params::Mode;
use super::state::{ServerState, Slot};
use crate::crypto::Exponent;
use crate::error::{Error, Result};
use crate::pir::wire::put_var_bytes;
use crate::pir::{self, Channel, Frame, FrameKind, PayloadReader};

/// RECORD_FETCH selector: one identifier, or every record.
pub(crate) const FETCH_ONE: u8 = 0;
pub(crate) const FETCH_ALL: u8 = 1;

/// Per-connection server state.
#[derive(Debug)]
pub struct Session {
    rng: ChaCha20Rng,
    blind: Option<(Exponent, Exponent)>,
}

/// The storage server. Reads run concurrently; writes are exclusive.
#[derive(Debug)]
pub struct Server {
    state: RwLock<ServerState>,
    seeder: Mutex<ChaCha20Rng>,
    hello: Vec<u8>,
}

impl Server {
    /// `seed` drives the blinding exponents and shuffles of every session.
    pub fn new(state: ServerState, seed: [u8; 32]) -> Self {
        let mut hello = state.header.digest().to_vec();
        hello.extend_from_slice(&state.header.to_bytes());
        Self {
            state: RwLock::new(state),
            seeder: Mutex::new(ChaCha20Rng::from_seed(seed)),
            hello,
        }
    }

    pub fn session(&self) -> Session {
        let rng = ChaCha20Rng::from_rng(&mut *self.seeder.lock().unwrap());
        Session { rng, blind: None }
    }

    /// An in-process channel with its own session.
    pub fn connect(&self) -> LocalChannel<'_> {
        LocalChannel {
            server: self,
            session: self.session(),
        }
    }

    pub fn snapshot(&self) -> ServerState {
        self.state.read().unwrap().clone()
    }

    pub fn into_state(self) -> ServerState {
        self.state.into_inner().unwrap()
    }

    pub fn handle(&self, session: &mut Session, frame: Frame) -> Frame {
        self.try_handle(session, frame).unwrap_or_else(|e| pir::error_frame(&e))
    }

    fn try_handle(&self, session: &mut Session, frame: Frame) -> Result<Frame> {
        let mut r = PayloadReader::new(&frame.payload);
        match frame.kind {
            FrameKind::Hello => Ok(Frame::new(FrameKind::Hello, self.hello.clone())),
            FrameKind::SendInit => {
                let mut st = self.state.write().unwrap();
                let bits = st.params().tag_bits;
                if st.next_id >> bits != 0 {
                    return Err(Error::Protocol(format!("identifier space of {bits} bits exhausted")));
                }
                let id = st.next_id;
                st.next_id += 1;
                Ok(Frame::new(FrameKind::SendId, id.to_be_bytes().to_vec()))
            }
            FrameKind::SendPayload => {
                let id = r.u64()?;
                let body = r.rest().to_vec();
                let mut st = self.state.write().unwrap();
                if id >= st.next_id || st.records.contains_key(&id) {
                    return Err(Error::Protocol(format!("identifier {id} was not issued or is already stored")));
                }
                st.records.insert(id, body);
                Ok(Frame::ack())
            }
            FrameKind::SendIndex => {
                let id = r.u64()?;
                let count = r.u16()? as usize;
                r.finish()?;
                let st = self.state.read().unwrap();
                if !st.records.contains_key(&id) || count != st.params().composite_size() {
                    return Err(Error::Protocol(format!("cannot index identifier {id}")));
                }
                Ok(Frame::ack())
            }
            FrameKind::RetrieveBegin => {
                let st = self.state.read().unwrap();
                match st.params().mode {
                    Mode::Base => {
                        session.blind = None;
                        Ok(Frame::ack())
                    }
                    Mode::Extended => {
                        let g = st.params().group;
                        let c1 = g.random_nonzero_exponent(&mut session.rng);
                        let c2 = g.random_nonzero_exponent(&mut session.rng);
                        session.blind = Some((c1, c2));
                        Ok(Frame::new(FrameKind::RerandPub, g.pow_gen(&c2).encode()))
                    }
                }
            }
            FrameKind::QueryDirect => {
                let st = self.state.read().unwrap();
                let (_, bucket) = pir::answer_query_direct(&st.store, &frame.payload)?;
                let body = match &session.blind {
                    None => bucket.to_vec(),
                    Some(b) => blind_bucket(&st, bucket, b, &mut session.rng)?,
                };
                Ok(Frame::new(FrameKind::RespBucket, body))
            }
            FrameKind::QueryBatch => {
                let st = self.state.read().unwrap();
                let image = match &session.blind {
                    None => st.store.as_bytes().to_vec(),
                    Some(b) => {
                        let mut out = Vec::with_capacity(st.store.as_bytes().len());
                        for bucket in pir::split_buckets(st.store.as_bytes(), st.store.bucket_len()) {
                            out.extend_from_slice(&blind_bucket(&st, bucket, b, &mut session.rng)?);
                        }
                        out
                    }
                };
                Ok(Frame::new(
                    FrameKind::RespStore,
                    pir::store_image_payload(st.store.generation(), &image),
                ))
            }
            FrameKind::UpdateDirect => {
                pir::apply_update_direct(&mut self.state.write().unwrap().store, &frame.payload)?;
                Ok(Frame::ack())
            }
            FrameKind::UpdateRewrite if frame.payload.is_empty() => {
                let st = self.state.read().unwrap();
                Ok(Frame::new(
                    FrameKind::RespStore,
                    pir::store_image_payload(st.store.generation(), st.store.as_bytes()),
                ))
            }
            FrameKind::UpdateRewrite => {
                pir::apply_rewrite(&mut self.state.write().unwrap().store, &frame.payload)?;
                Ok(Frame::ack())
            }
            FrameKind::RecordFetch => {
                let st = self.state.read().unwrap();
                let mut out = Vec::new();
                match r.u8()? {
                    FETCH_ONE => {
                        let id = r.u64()?;
                        let rec = st.records.get(&id).ok_or(Error::UnknownIdentifier(id))?;
                        out.extend_from_slice(&1u64.to_be_bytes());
                        out.extend_from_slice(&id.to_be_bytes());
                        put_var_bytes(&mut out, rec);
                    }
                    FETCH_ALL => {
                        out.extend_from_slice(&(st.records.len() as u64).to_be_bytes());
                        for (id, rec) in &st.records {
                            out.extend_from_slice(&id.to_be_bytes());
                            put_var_bytes(&mut out, rec);
                        }
                    }
                    x => return Err(Error::Protocol(format!("unknown fetch selector {x}"))),
                }
                r.finish()?;
                Ok(Frame::new(FrameKind::Record, out))
            }
            other => Err(Error::Protocol(format!("unexpected {other:?} from a client"))),
        }
    }
}

/// `(Enc(a)^{c1}, Enc(b)^{c2})` for every slot, in shuffled order.
fn blind_bucket(
    st: &ServerState,
    bucket: &[u8],
    (c1, c2): &(Exponent, Exponent),
    rng: &mut ChaCha20Rng,
) -> Result<Vec<u8>> {
    let group = st.params().group;
    let mut slots = bucket
        .chunks_exact(st.store.slot_width())
        .map(|s| {
            let slot = Slot::decode(group, s)?;
            Ok(Slot {
                marker: slot.marker.pow(c1)?,
                tag: slot.tag.pow(c2)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    slots.shuffle(rng);
    Ok(slots.iter().flat_map(|s| s.encode()).collect())
}

/// A [`Channel`] straight into an in-process [`Server`].
#[derive(Debug)]
pub struct LocalChannel<'a> {
    server: &'a Server,
    session: Session,
}

impl Channel for LocalChannel<'_> {
    fn exchange(&mut self, request: Frame) -> Result<Frame> {
        Ok(self.server.handle(&mut self.session, request))
    }
}
