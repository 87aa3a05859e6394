//! Private retrieval from and storage into a bucket store.
//!
//! Queries run over one of two transports. [`QueryTransport::Direct`] names
//! the bucket in the clear. [`QueryTransport::ObliviousBatch`] downloads the
//! whole store, so the server sees the same bytes whichever bucket the client
//! wanted. Updates likewise run [`UpdateTransport::Direct`] or
//! [`UpdateTransport::FullRewrite`], where the client downloads the store,
//! writes its slot, re-randomizes every slot and uploads the result.

use std::sync::RwLock;

mod channel;
mod store;
mod transcript;
pub mod wire;

pub use channel::{Channel, FnChannel, Metered};
pub use store::{split_buckets, BucketStore};
pub use transcript::{Direction, Recording, Replay, Transcript};
pub use wire::{ErrCode, Frame, FrameKind, PayloadReader, MAX_PAYLOAD};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueryTransport {
    Direct,
    ObliviousBatch,
}

impl QueryTransport {
    pub fn name(self) -> &'static str {
        match self {
            QueryTransport::Direct => "direct",
            QueryTransport::ObliviousBatch => "oblivious-batch",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(QueryTransport::Direct),
            "oblivious-batch" => Ok(QueryTransport::ObliviousBatch),
            _ => Err(Error::Config(format!("unknown query transport {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UpdateTransport {
    Direct,
    FullRewrite,
}

impl UpdateTransport {
    pub fn name(self) -> &'static str {
        match self {
            UpdateTransport::Direct => "direct",
            UpdateTransport::FullRewrite => "full-rewrite",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(UpdateTransport::Direct),
            "full-rewrite" => Ok(UpdateTransport::FullRewrite),
            _ => Err(Error::Config(format!("unknown update transport {s:?}"))),
        }
    }
}

/// Shape of a store as known to clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreLayout {
    pub buckets: usize,
    pub capacity: usize,
    pub slot_width: usize,
}

impl StoreLayout {
    pub fn of(store: &BucketStore) -> Self {
        Self {
            buckets: store.buckets(),
            capacity: store.capacity(),
            slot_width: store.slot_width(),
        }
    }

    pub fn bucket_len(&self) -> usize {
        self.capacity * self.slot_width
    }

    pub fn store_len(&self) -> usize {
        self.buckets * self.bucket_len()
    }

    fn check(&self, alpha: usize) -> Result<()> {
        if alpha >= self.buckets {
            return Err(Error::Protocol(format!("bucket index {alpha} out of range 0..{}", self.buckets)));
        }
        Ok(())
    }
}

// Server side.

/// Answer to QUERY_DIRECT: the bucket named by the payload.
pub fn answer_query_direct<'a>(store: &'a BucketStore, payload: &[u8]) -> Result<(usize, &'a [u8])> {
    let mut r = PayloadReader::new(payload);
    let alpha = r.u32().map_err(|_| Error::Protocol("malformed query".into()))? as usize;
    r.finish().map_err(|_| Error::Protocol("malformed query".into()))?;
    Ok((alpha, store.bucket(alpha)?))
}

/// RESP_STORE payload: generation then the full image.
pub fn store_image_payload(generation: u64, image: &[u8]) -> Vec<u8> {
    let mut p = Vec::with_capacity(8 + image.len());
    p.extend_from_slice(&generation.to_be_bytes());
    p.extend_from_slice(image);
    p
}

/// Applies UPDATE_DIRECT: bucket `u32`, slot `u16`, slot bytes.
pub fn apply_update_direct(store: &mut BucketStore, payload: &[u8]) -> Result<()> {
    let mut r = PayloadReader::new(payload);
    let alpha = r.u32()? as usize;
    let slot = r.u16()? as usize;
    store.set_slot(alpha, slot, r.rest())
}

/// Second half of FULL-REWRITE: generation then the new image. Rejects
/// uploads built on an outdated download.
pub fn apply_rewrite(store: &mut BucketStore, payload: &[u8]) -> Result<()> {
    let mut r = PayloadReader::new(payload);
    let generation = r.u64()?;
    if generation != store.generation() {
        return Err(Error::Protocol(format!(
            "rewrite based on generation {generation}, store is at {}",
            store.generation()
        )));
    }
    store.replace_all(r.rest())
}

pub(crate) fn error_frame(e: &Error) -> Frame {
    match e {
        Error::Overflow { bucket } => Frame::error(ErrCode::Overflow, *bucket as u64, &e.to_string()),
        Error::UnknownIdentifier(id) => Frame::error(ErrCode::UnknownIdentifier, *id, &e.to_string()),
        Error::Protocol(m) if m.starts_with("rewrite based on") => Frame::error(ErrCode::Stale, 0, m),
        _ => Frame::error(ErrCode::Protocol, 0, &e.to_string()),
    }
}

/// A server speaking only the store frames.
#[derive(Debug)]
pub struct PirServer {
    store: RwLock<BucketStore>,
}

impl PirServer {
    pub fn new(store: BucketStore) -> Self {
        Self { store: RwLock::new(store) }
    }

    pub fn layout(&self) -> StoreLayout {
        StoreLayout::of(&self.store.read().unwrap())
    }

    pub fn snapshot(&self) -> BucketStore {
        self.store.read().unwrap().clone()
    }

    pub fn handle(&self, frame: Frame) -> Frame {
        self.try_handle(frame).unwrap_or_else(|e| error_frame(&e))
    }

    fn try_handle(&self, frame: Frame) -> Result<Frame> {
        match frame.kind {
            FrameKind::QueryDirect => {
                let store = self.store.read().unwrap();
                let (_, bucket) = answer_query_direct(&store, &frame.payload)?;
                Ok(Frame::new(FrameKind::RespBucket, bucket.to_vec()))
            }
            FrameKind::QueryBatch => {
                let store = self.store.read().unwrap();
                Ok(Frame::new(
                    FrameKind::RespStore,
                    store_image_payload(store.generation(), store.as_bytes()),
                ))
            }
            FrameKind::UpdateDirect => {
                apply_update_direct(&mut self.store.write().unwrap(), &frame.payload)?;
                Ok(Frame::ack())
            }
            FrameKind::UpdateRewrite if frame.payload.is_empty() => {
                let store = self.store.read().unwrap();
                Ok(Frame::new(
                    FrameKind::RespStore,
                    store_image_payload(store.generation(), store.as_bytes()),
                ))
            }
            FrameKind::UpdateRewrite => {
                apply_rewrite(&mut self.store.write().unwrap(), &frame.payload)?;
                Ok(Frame::ack())
            }
            other => Err(Error::Protocol(format!("unexpected {other:?}"))),
        }
    }
}

// Client side.

fn parse_store(resp: Frame, layout: &StoreLayout) -> Result<(u64, Vec<u8>)> {
    let resp = resp.expect(FrameKind::RespStore)?;
    if resp.payload.len() != 8 + layout.store_len() {
        return Err(Error::Transport(format!(
            "store image of {} bytes, expected {}",
            resp.payload.len().saturating_sub(8),
            layout.store_len()
        )));
    }
    let generation = u64::from_be_bytes(resp.payload[..8].try_into().unwrap());
    let mut image = resp.payload;
    image.drain(..8);
    Ok((generation, image))
}

/// Fetches bucket `alpha`.
pub fn pir_query<C: Channel + ?Sized>(
    ch: &mut C,
    transport: QueryTransport,
    layout: &StoreLayout,
    alpha: usize,
) -> Result<Vec<u8>> {
    Ok(pir_query_many(ch, transport, layout, &[alpha])?.pop().unwrap())
}

/// Fetches several buckets. The batch transport downloads the store once.
pub fn pir_query_many<C: Channel + ?Sized>(
    ch: &mut C,
    transport: QueryTransport,
    layout: &StoreLayout,
    alphas: &[usize],
) -> Result<Vec<Vec<u8>>> {
    for &a in alphas {
        layout.check(a)?;
    }
    match transport {
        QueryTransport::Direct => alphas
            .iter()
            .map(|&a| {
                let resp = ch
                    .exchange(Frame::new(FrameKind::QueryDirect, (a as u32).to_be_bytes().to_vec()))?
                    .expect(FrameKind::RespBucket)?;
                if resp.payload.len() != layout.bucket_len() {
                    return Err(Error::Transport(format!(
                        "bucket of {} bytes, expected {}",
                        resp.payload.len(),
                        layout.bucket_len()
                    )));
                }
                Ok(resp.payload)
            })
            .collect(),
        QueryTransport::ObliviousBatch => {
            let (_, image) = parse_store(ch.exchange(Frame::empty(FrameKind::QueryBatch))?, layout)?;
            let w = layout.bucket_len();
            Ok(alphas.iter().map(|&a| image[a * w..(a + 1) * w].to_vec()).collect())
        }
    }
}

/// Writes `val` into slot `slot` of bucket `alpha`.
///
/// `rerandomize` maps a slot to a fresh-looking slot with the same content;
/// FULL-REWRITE applies it to every slot before uploading.
pub fn pis_update<C: Channel + ?Sized>(
    ch: &mut C,
    transport: UpdateTransport,
    layout: &StoreLayout,
    alpha: usize,
    slot: usize,
    val: &[u8],
    rerandomize: &mut dyn FnMut(&[u8]) -> Result<Vec<u8>>,
) -> Result<()> {
    layout.check(alpha)?;
    if slot >= layout.capacity {
        return Err(Error::Overflow { bucket: alpha });
    }
    if val.len() != layout.slot_width {
        return Err(Error::param(format!("slot value must be {} bytes", layout.slot_width)));
    }
    match transport {
        UpdateTransport::Direct => {
            let mut p = Vec::with_capacity(6 + val.len());
            p.extend_from_slice(&(alpha as u32).to_be_bytes());
            p.extend_from_slice(&(slot as u16).to_be_bytes());
            p.extend_from_slice(val);
            ch.exchange(Frame::new(FrameKind::UpdateDirect, p))?
                .expect(FrameKind::Ack)?;
        }
        UpdateTransport::FullRewrite => {
            let (generation, mut image) = parse_store(ch.exchange(Frame::empty(FrameKind::UpdateRewrite))?, layout)?;
            let start = alpha * layout.bucket_len() + slot * layout.slot_width;
            image[start..start + layout.slot_width].copy_from_slice(val);
            let mut fresh = Vec::with_capacity(8 + image.len());
            fresh.extend_from_slice(&generation.to_be_bytes());
            for s in image.chunks_exact(layout.slot_width) {
                let r = rerandomize(s)?;
                if r.len() != layout.slot_width {
                    return Err(Error::param("re-randomized slot changed width"));
                }
                fresh.extend_from_slice(&r);
            }
            ch.exchange(Frame::new(FrameKind::UpdateRewrite, fresh))?
                .expect(FrameKind::Ack)?;
        }
    }
    Ok(())
}
