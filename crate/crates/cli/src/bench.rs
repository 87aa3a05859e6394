use std::path::Path;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use etse::crypto::{decrypt, BsgsTable};
use etse::ident::{enroll, Registry};
use etse::pir::{self, Channel, Frame, FrameKind, StoreLayout};
use etse::protocol::{keygen, Receiver, Server, Slot};
use etse::template::{perturb_bsc, random_template};

use crate::commands::{CliResult, Failure};

fn load(config: Option<&Path>) -> CliResult<etse::protocol::SchemeParams> {
    match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Ok(etse::protocol::SchemeParams::from_config(&text)?)
        }
        None => Ok(Default::default()),
    }
}

/// Times each phase of a retrieval separately: hashing, bucket transfer,
/// decryption and discrete logs, then the whole operation.
pub fn run(config: Option<&Path>, enrolled: usize, queries: usize, seed: [u8; 32]) -> CliResult {
    if enrolled == 0 || queries == 0 {
        return Err(Failure::Usage("--enrolled and --queries must be positive".into()));
    }
    let p = load(config)?;
    let mut master = ChaCha20Rng::from_seed(seed);
    let t = Instant::now();
    let (public, secret, state) = keygen(&p, master.random())?;
    let keygen_time = t.elapsed();
    let server = Server::new(state, master.random());
    let mut rng = ChaCha20Rng::from_seed(master.random());

    let mut registry = Registry::new(p.buckets);
    let mut refs = Vec::with_capacity(enrolled);
    let t = Instant::now();
    for i in 0..enrolled {
        let b = random_template(p.n_bits, &mut rng)?;
        enroll(&format!("user-{i}"), &b, &public, &mut registry, &mut server.connect(), &mut rng)?;
        refs.push(b);
    }
    let enroll_time = t.elapsed();

    let layout = StoreLayout {
        buckets: p.buckets,
        capacity: p.bucket_capacity,
        slot_width: p.slot_width(),
    };
    let receiver = Receiver::new(secret.clone());
    let (mut hash, mut transfer, mut dec, mut total) = (Duration::ZERO, Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let (mut decryptions, mut bytes_down) = (0u64, 0u64);
    for q in 0..queries {
        let probe = perturb_bsc(&refs[q % refs.len()], 0.01, &mut rng)?;

        let t = Instant::now();
        let alphas = public.composite.indices(&probe)?;
        hash += t.elapsed();
        let mut distinct = alphas.clone();
        distinct.sort_unstable();
        distinct.dedup();

        let t = Instant::now();
        let mut ch = server.connect();
        ch.exchange(Frame::new(FrameKind::RetrieveBegin, (distinct.len() as u16).to_be_bytes().to_vec()))?;
        let buckets = pir::pir_query_many(&mut ch, p.query_transport, &layout, &distinct)?;
        transfer += t.elapsed();

        let t = Instant::now();
        for bucket in &buckets {
            bytes_down += bucket.len() as u64;
            for s in bucket.chunks_exact(p.slot_width()) {
                let slot = Slot::decode(p.group, s)?;
                std::hint::black_box(decrypt(&secret.sk, &slot.tag));
                decryptions += 1;
            }
        }
        dec += t.elapsed();

        let t = Instant::now();
        receiver.retrieve(&probe, &mut server.connect())?;
        total += t.elapsed();
    }

    let bound = 1u64 << p.tag_bits;
    let t = Instant::now();
    let table = BsgsTable::new(&p.group.generator(), bound);
    let table_time = t.elapsed();
    let target = p.group.pow_gen(&p.group.exponent(bound - 1));
    let t = Instant::now();
    let reps = 50;
    for _ in 0..reps {
        std::hint::black_box(table.solve(&target));
    }
    let dlog_time = t.elapsed() / reps;

    let per = |d: Duration| d.as_secs_f64() * 1e6 / queries as f64;
    println!("group = {}", p.group.name());
    println!("mode = {}", p.mode.name());
    println!("enrolled = {enrolled}");
    println!("queries = {queries}");
    println!("keygen_ms = {:.1}", keygen_time.as_secs_f64() * 1e3);
    println!("enroll_us_per_user = {:.1}", enroll_time.as_secs_f64() * 1e6 / enrolled as f64);
    println!("hash_us_per_query = {:.1}", per(hash));
    println!("transfer_us_per_query = {:.1}", per(transfer));
    println!("decrypt_all_us_per_query = {:.1}", per(dec));
    println!("decryptions_per_query = {:.1}", decryptions as f64 / queries as f64);
    println!("bucket_bytes_per_query = {:.1}", bytes_down as f64 / queries as f64);
    println!("dlog_table_ms = {:.1}", table_time.as_secs_f64() * 1e3);
    println!("dlog_us = {:.1}", dlog_time.as_secs_f64() * 1e6);
    println!("retrieve_us_per_query = {:.1}", per(total));
    Ok(())
}
