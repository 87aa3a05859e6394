use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Mutex, OnceLock};

use rand::CryptoRng;
use serde::{Deserialize, Serialize};

use super::keys::{IndexHeader, PublicBundle, SecretBundle};
use super::params::Mode;
use super::server::{FETCH_ALL, FETCH_ONE};
use super::state::Slot;
use crate::bloom::select_by_threshold;
use crate::crypto::{self, payload, BsgsTable, Ciphertext, Element, GroupId, PublicKey};
use crate::error::{Error, Result};
use crate::pir::{self, Channel, Frame, FrameKind, Metered, PayloadReader, QueryTransport, StoreLayout};
use crate::template::BinaryTemplate;

/// Asks the server for its header and fails with
/// [`Error::HeaderMismatch`] unless it matches `expected`.
pub fn hello<C: Channel + ?Sized>(ch: &mut C, expected: &IndexHeader) -> Result<()> {
    let resp = ch.exchange(Frame::empty(FrameKind::Hello))?.expect(FrameKind::Hello)?;
    if resp.payload.len() < 32 || resp.payload[..32] != expected.digest() {
        return Err(Error::HeaderMismatch);
    }
    Ok(())
}

fn layout_of(bundle: &PublicBundle) -> StoreLayout {
    StoreLayout {
        buckets: bundle.params.buckets,
        capacity: bundle.params.bucket_capacity,
        slot_width: bundle.params.slot_width(),
    }
}

/// How many slots of each bucket the sender has filled. The server cannot
/// tell padding from data, so occupancy lives with the sender.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderState {
    pub fill: Vec<u16>,
}

impl SenderState {
    pub fn new(buckets: usize) -> Self {
        Self { fill: vec![0; buckets] }
    }

    pub fn occupancy(&self, alpha: usize) -> usize {
        self.fill[alpha] as usize
    }
}

fn rerandomize_slot<R: CryptoRng + ?Sized>(pk: &PublicKey, bytes: &[u8], rng: &mut R) -> Result<Vec<u8>> {
    let s = Slot::decode(pk.group(), bytes)?;
    Ok(Slot {
        marker: crypto::rerandomize(pk, &s.marker, rng),
        tag: crypto::rerandomize(pk, &s.tag, rng),
    }
    .encode())
}

/// Stores `x` and indexes it under all `μ·ν` composite buckets. Returns the
/// identifier the server assigned.
pub fn send<C: Channel + ?Sized, R: CryptoRng + ?Sized>(
    x: &BinaryTemplate,
    bundle: &PublicBundle,
    sender: &mut SenderState,
    ch: &mut C,
    rng: &mut R,
) -> Result<u64> {
    let p = &bundle.params;
    if x.len() != p.n_bits {
        return Err(Error::Dimension {
            expected: p.n_bits,
            found: x.len(),
        });
    }
    if sender.fill.len() != p.buckets {
        return Err(Error::param("sender state was built for a different bucket count"));
    }
    let alphas = bundle.composite.indices(x)?;
    let mut need: HashMap<usize, usize> = HashMap::new();
    for &a in &alphas {
        let n = need.entry(a).or_insert(0);
        *n += 1;
        if sender.occupancy(a) + *n > p.bucket_capacity {
            return Err(Error::EnrollmentRejected { bucket: a });
        }
    }

    let resp = ch.exchange(Frame::empty(FrameKind::SendInit))?.expect(FrameKind::SendId)?;
    let mut r = PayloadReader::new(&resp.payload);
    let id = r.u64()?;
    r.finish()?;
    if p.tag_bits < 64 && id >> p.tag_bits != 0 {
        return Err(Error::Protocol(format!("identifier {id} exceeds {} bits", p.tag_bits)));
    }

    let mut body = id.to_be_bytes().to_vec();
    body.extend_from_slice(&payload::seal(&bundle.pk, &x.to_file_bytes(), rng));
    ch.exchange(Frame::new(FrameKind::SendPayload, body))?.expect(FrameKind::Ack)?;

    let mut announce = id.to_be_bytes().to_vec();
    announce.extend_from_slice(&(alphas.len() as u16).to_be_bytes());
    ch.exchange(Frame::new(FrameKind::SendIndex, announce))?.expect(FrameKind::Ack)?;

    let group = p.group;
    let pk = &bundle.pk;
    let slots: Vec<Slot> = match p.mode {
        Mode::Base => {
            let tag = group.pow_gen(&group.exponent(id));
            (0..alphas.len())
                .map(|_| Slot {
                    marker: crypto::encrypt(pk, &group.random_element(rng), rng),
                    tag: crypto::encrypt(pk, &tag, rng),
                })
                .collect()
        }
        Mode::Extended => {
            let marker = group.second_generator().pow(&group.random_nonzero_exponent(rng));
            let shares = crypto::split_secret(group, id, alphas.len(), p.tag_bits, rng)?;
            shares
                .shares()
                .iter()
                .map(|a| Slot {
                    marker: crypto::encrypt(pk, &marker, rng),
                    tag: crypto::encrypt(pk, a, rng),
                })
                .collect()
        }
    };

    let layout = layout_of(bundle);
    for (&alpha, slot) in alphas.iter().zip(&slots) {
        let at = sender.occupancy(alpha);
        pir::pis_update(
            ch,
            p.update_transport,
            &layout,
            alpha,
            at,
            &slot.encode(),
            &mut |s: &[u8]| rerandomize_slot(pk, s, rng),
        )?;
        sender.fill[alpha] += 1;
    }
    Ok(id)
}

/// Work done by one retrieval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub lsh_evaluations: u64,
    pub bloom_hashes: u64,
    pub pir_requests: u64,
    pub buckets_fetched: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub decryptions: u64,
    /// Discrete logs actually solved; memo hits are free.
    pub discrete_logs: u64,
}

impl OpCounts {
    pub fn add(&mut self, o: &OpCounts) {
        self.lsh_evaluations += o.lsh_evaluations;
        self.bloom_hashes += o.bloom_hashes;
        self.pir_requests += o.pir_requests;
        self.buckets_fetched += o.buckets_fetched;
        self.bytes_up += o.bytes_up;
        self.bytes_down += o.bytes_down;
        self.decryptions += o.decryptions;
        self.discrete_logs += o.discrete_logs;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Retrieval {
    pub identifiers: BTreeSet<u64>,
    pub counts: OpCounts,
}

/// The secret-key holder's side of retrieval.
#[derive(Debug)]
pub struct Receiver {
    bundle: SecretBundle,
    base_table: OnceLock<BsgsTable>,
    memo: Mutex<HashMap<Vec<u8>, u64>>,
}

impl Receiver {
    pub fn new(bundle: SecretBundle) -> Self {
        Self {
            bundle,
            base_table: OnceLock::new(),
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn bundle(&self) -> &SecretBundle {
        &self.bundle
    }

    fn bound(&self) -> u64 {
        1u64 << self.bundle.public.params.tag_bits
    }

    fn decrypt(&self, c: &Ciphertext, counts: &mut OpCounts) -> Element {
        counts.decryptions += 1;
        crypto::decrypt(&self.bundle.sk, c)
    }

    fn tag_of(&self, encoded: &[u8], counts: &mut OpCounts) -> Result<u64> {
        if let Some(&id) = self.memo.lock().unwrap().get(encoded) {
            return Ok(id);
        }
        let group = self.bundle.public.params.group;
        let table = self.base_table.get_or_init(|| BsgsTable::new(&group.generator(), self.bound()));
        counts.discrete_logs += 1;
        let id = table.solve(&group.decode(encoded)?).ok_or(Error::CorruptShare)?;
        self.memo.lock().unwrap().insert(encoded.to_vec(), id);
        Ok(id)
    }

    /// `Φ(x')`: identifiers whose index entries meet the threshold for `x'`.
    pub fn retrieve<C: Channel + ?Sized>(&self, x: &BinaryTemplate, ch: &mut C) -> Result<Retrieval> {
        let pb = &self.bundle.public;
        let p = &pb.params;
        if x.len() != p.n_bits {
            return Err(Error::Dimension {
                expected: p.n_bits,
                found: x.len(),
            });
        }
        let mut counts = OpCounts {
            lsh_evaluations: p.lsh_functions as u64,
            bloom_hashes: p.composite_size() as u64,
            ..OpCounts::default()
        };
        let alphas = pb.composite.indices(x)?;
        let mut distinct: Vec<usize> = Vec::new();
        let mut pos: HashMap<usize, usize> = HashMap::new();
        for &a in &alphas {
            pos.entry(a).or_insert_with(|| {
                distinct.push(a);
                distinct.len() - 1
            });
        }

        let mut metered = Metered::new(&mut *ch);
        let announced: u16 = match p.query_transport {
            QueryTransport::Direct => distinct.len() as u16,
            QueryTransport::ObliviousBatch => 0,
        };
        let begin = metered.exchange(Frame::new(FrameKind::RetrieveBegin, announced.to_be_bytes().to_vec()))?;
        let blind_base = match p.mode {
            Mode::Base => {
                begin.expect(FrameKind::Ack)?;
                None
            }
            Mode::Extended => Some(p.group.decode(&begin.expect(FrameKind::RerandPub)?.payload)?),
        };
        let buckets = pir::pir_query_many(&mut metered, p.query_transport, &layout_of(pb), &distinct)?;
        counts.buckets_fetched = distinct.len() as u64;
        counts.pir_requests = metered.requests;
        counts.bytes_up = metered.bytes_up;
        counts.bytes_down = metered.bytes_down;

        let identifiers = match blind_base {
            None => self.lookup_base(&buckets, &alphas, &pos, &mut counts)?,
            Some(b) => self.lookup_extended(&buckets, &b, &mut counts)?,
        };
        Ok(Retrieval { identifiers, counts })
    }

    fn decode_slots(&self, bucket: &[u8]) -> Result<Vec<Slot>> {
        let p = &self.bundle.public.params;
        bucket
            .chunks_exact(p.slot_width())
            .map(|s| Slot::decode(p.group, s))
            .collect()
    }

    fn lookup_base(
        &self,
        buckets: &[Vec<u8>],
        alphas: &[usize],
        pos: &HashMap<usize, usize>,
        counts: &mut OpCounts,
    ) -> Result<BTreeSet<u64>> {
        let p = &self.bundle.public.params;
        let mut tag_sets: Vec<Option<BTreeSet<Vec<u8>>>> = vec![None; buckets.len()];
        let mut open = |d: usize, counts: &mut OpCounts| -> Result<BTreeSet<Vec<u8>>> {
            if tag_sets[d].is_none() {
                let slots = self.decode_slots(&buckets[d])?;
                tag_sets[d] = Some(slots.iter().map(|s| self.decrypt(&s.tag, counts).encode()).collect());
            }
            Ok(tag_sets[d].clone().unwrap())
        };
        let survivors: BTreeSet<Vec<u8>> = if p.threshold == p.composite_size() {
            let mut running: Option<BTreeSet<Vec<u8>>> = None;
            for d in 0..buckets.len() {
                let set = open(d, counts)?;
                let next: BTreeSet<Vec<u8>> = match running {
                    None => set,
                    Some(r) => r.intersection(&set).cloned().collect(),
                };
                let empty = next.is_empty();
                running = Some(next);
                if empty {
                    break;
                }
            }
            running.unwrap_or_default()
        } else {
            for d in 0..buckets.len() {
                open(d, counts)?;
            }
            let sets: Vec<&BTreeSet<Vec<u8>>> = alphas
                .iter()
                .map(|a| tag_sets[pos[a]].as_ref().unwrap())
                .collect();
            select_by_threshold(&sets, p.bloom_functions, p.threshold)?
        };
        // A group whose hashes share a bucket passes every padding entry of
        // that bucket; padding has no small discrete log.
        let mut out = BTreeSet::new();
        for e in &survivors {
            match self.tag_of(e, counts) {
                Ok(id) => {
                    out.insert(id);
                }
                Err(Error::CorruptShare) => {}
                Err(err) => return Err(err),
            }
        }
        Ok(out)
    }

    fn lookup_extended(&self, buckets: &[Vec<u8>], blind_base: &Element, counts: &mut OpCounts) -> Result<BTreeSet<u64>> {
        let group: GroupId = self.bundle.public.params.group;
        let mut opened: Vec<(Vec<Slot>, HashMap<Vec<u8>, Vec<usize>>)> = Vec::new();
        let mut running: Option<BTreeSet<Vec<u8>>> = None;
        for bucket in buckets {
            let slots = self.decode_slots(bucket)?;
            let mut by_marker: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
            for (i, s) in slots.iter().enumerate() {
                by_marker.entry(self.decrypt(&s.marker, counts).encode()).or_default().push(i);
            }
            let keys: BTreeSet<Vec<u8>> = by_marker.keys().cloned().collect();
            let next: BTreeSet<Vec<u8>> = match running {
                None => keys,
                Some(r) => r.intersection(&keys).cloned().collect(),
            };
            opened.push((slots, by_marker));
            let empty = next.is_empty();
            running = Some(next);
            if empty {
                return Ok(BTreeSet::new());
            }
        }
        let survivors = running.unwrap_or_default();
        if survivors.is_empty() {
            return Ok(BTreeSet::new());
        }
        let table = BsgsTable::new(blind_base, self.bound());
        let mut out = BTreeSet::new();
        for marker in &survivors {
            let mut product = group.identity();
            for (slots, by_marker) in &opened {
                for &i in &by_marker[marker] {
                    product = product.op(&self.decrypt(&slots[i].tag, counts));
                }
            }
            counts.discrete_logs += 1;
            out.insert(table.solve(&product).ok_or(Error::CorruptShare)?);
        }
        Ok(out)
    }
}

/// Downloads sealed payloads for `ids`. The batch transport downloads every
/// record whatever `ids` holds.
pub fn fetch_records<C: Channel + ?Sized>(
    ch: &mut C,
    transport: QueryTransport,
    ids: &BTreeSet<u64>,
) -> Result<BTreeMap<u64, Vec<u8>>> {
    let parse = |resp: Frame, into: &mut BTreeMap<u64, Vec<u8>>| -> Result<()> {
        let resp = resp.expect(FrameKind::Record)?;
        let mut r = PayloadReader::new(&resp.payload);
        for _ in 0..r.u64()? {
            let id = r.u64()?;
            into.insert(id, r.var_bytes()?.to_vec());
        }
        r.finish()
    };
    let mut all = BTreeMap::new();
    match transport {
        QueryTransport::Direct => {
            for &id in ids {
                let mut req = vec![FETCH_ONE];
                req.extend_from_slice(&id.to_be_bytes());
                parse(ch.exchange(Frame::new(FrameKind::RecordFetch, req))?, &mut all)?;
            }
        }
        QueryTransport::ObliviousBatch => {
            parse(ch.exchange(Frame::new(FrameKind::RecordFetch, vec![FETCH_ALL]))?, &mut all)?;
        }
    }
    ids.iter()
        .map(|&id| all.remove(&id).map(|r| (id, r)).ok_or(Error::UnknownIdentifier(id)))
        .collect()
}
