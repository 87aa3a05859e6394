use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use etse::bloom::{BfsStructure, Tag};
use etse::crypto::{combine, decrypt, discrete_log_small, encrypt, raise, split_secret, BsgsTable, GroupId, Keypair};
use etse::pir::QueryTransport;
use etse::protocol::games::{capture_view, Operation};
use etse::protocol::{keygen, send, Mode, Receiver, SchemeParams, SenderState, Server, ServerState};
use etse::template::{hamming_distance, perturb_exact, random_template, BinaryTemplate};

use crate::commands::{CliResult, Failure};

type Check = fn(&mut ChaCha20Rng) -> Result<(), String>;

fn small(mode: Mode) -> SchemeParams {
    SchemeParams {
        n_bits: 128,
        lsh_bits: 6,
        lsh_functions: 4,
        bloom_functions: 2,
        buckets: 128,
        bucket_capacity: 8,
        threshold: 8,
        lambda_min: 13,
        lambda_max: 38,
        tag_bits: 16,
        group: GroupId::Schnorr61,
        mode,
        ..SchemeParams::default()
    }
}

fn ensure(ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.to_owned())
    }
}

fn templates(rng: &mut ChaCha20Rng) -> Result<(), String> {
    for _ in 0..200 {
        let a = random_template(256, rng).map_err(|e| e.to_string())?;
        let b = random_template(256, rng).map_err(|e| e.to_string())?;
        let c = random_template(256, rng).map_err(|e| e.to_string())?;
        let d = |x: &BinaryTemplate, y: &BinaryTemplate| hamming_distance(x, y).unwrap();
        ensure(d(&a, &c) <= d(&a, &b) + d(&b, &c), "triangle inequality")?;
        ensure(BinaryTemplate::from_file_bytes(&a.to_file_bytes()).unwrap() == a, "file round trip")?;
    }
    Ok(())
}

fn elgamal(rng: &mut ChaCha20Rng) -> Result<(), String> {
    for group in [GroupId::Ristretto255, GroupId::Schnorr61] {
        let kp = Keypair::generate(group, rng);
        for _ in 0..100 {
            let a = group.random_element(rng);
            let b = group.random_element(rng);
            let ca = encrypt(&kp.public, &a, rng);
            let cb = encrypt(&kp.public, &b, rng);
            ensure(decrypt(&kp.secret, &ca) == a, "round trip")?;
            ensure(decrypt(&kp.secret, &ca.mul(&cb)) == a.op(&b), "homomorphic product")?;
            let e = group.random_nonzero_exponent(rng);
            ensure(decrypt(&kp.secret, &ca.pow(&e).unwrap()) == a.pow(&e), "exponentiation")?;
        }
    }
    Ok(())
}

fn shares(rng: &mut ChaCha20Rng) -> Result<(), String> {
    let group = GroupId::Schnorr61;
    let table = BsgsTable::new(&group.generator(), 1 << 10);
    for s in 0..1u64 << 10 {
        let target = group.pow_gen(&group.exponent(s));
        ensure(table.solve(&target) == discrete_log_small(&group.generator(), &target, 1 << 10), "bsgs vs scan")?;
    }
    for _ in 0..20 {
        let s = rng.random_range(0..1u64 << 20);
        let t = group.random_nonzero_exponent(rng);
        let set = split_secret(group, s, 5, 20, rng).map_err(|e| e.to_string())?;
        let product = combine(group, &raise(set.shares(), &t));
        ensure(BsgsTable::new(&group.pow_gen(&t), 1 << 20).solve(&product) == Some(s), "share recovery")?;
    }
    Ok(())
}

fn index(rng: &mut ChaCha20Rng) -> Result<(), String> {
    let (public, _, _) = keygen(&small(Mode::Base), rng.random()).map_err(|e| e.to_string())?;
    let mut bfs = BfsStructure::new(128);
    let xs: Vec<_> = (0..30).map(|_| random_template(128, rng).unwrap()).collect();
    for (i, x) in xs.iter().enumerate() {
        bfs.add(&public.composite, x, Tag(i as u64)).unwrap();
    }
    for (i, x) in xs.iter().enumerate() {
        let got = bfs.lookup(&public.composite, x, 8).unwrap();
        ensure(got.contains(&Tag(i as u64)), "no false negatives")?;
    }
    Ok(())
}

fn protocol(rng: &mut ChaCha20Rng) -> Result<(), String> {
    let seed: [u8; 32] = rng.random();
    let mut worlds = Vec::new();
    for mode in [Mode::Base, Mode::Extended] {
        let (public, secret, state) = keygen(&small(mode), seed).map_err(|e| e.to_string())?;
        worlds.push((public, Receiver::new(secret), Server::new(state, seed), SenderState::new(128)));
    }
    let xs: Vec<_> = (0..10).map(|_| random_template(128, rng).unwrap()).collect();
    for x in &xs {
        let send_rng = ChaCha20Rng::from_seed(rng.random());
        for (public, _, server, sender) in worlds.iter_mut() {
            let mut r = send_rng.clone();
            send(x, public, sender, &mut server.connect(), &mut r).map_err(|e| e.to_string())?;
        }
    }
    for x in &xs {
        for d in [0, 3, 50] {
            let q = perturb_exact(x, d, rng).unwrap();
            let got: Vec<BTreeSet<u64>> = worlds
                .iter()
                .map(|(_, receiver, server, _)| receiver.retrieve(&q, &mut server.connect()).unwrap().identifiers)
                .collect();
            ensure(got[0] == got[1], "base and extended modes disagree")?;
            if d == 0 {
                ensure(!got[0].is_empty(), "exact query missed")?;
            }
        }
    }
    let state = worlds[0].2.snapshot();
    let bytes = state.to_bytes();
    ensure(ServerState::from_bytes(&bytes).unwrap().to_bytes() == bytes, "index round trip")?;
    Ok(())
}

fn transcripts(rng: &mut ChaCha20Rng) -> Result<(), String> {
    let mut p = small(Mode::Base);
    p.query_transport = QueryTransport::ObliviousBatch;
    let (_, secret, state) = keygen(&p, rng.random()).map_err(|e| e.to_string())?;
    let receiver = Receiver::new(secret);
    let a = random_template(128, rng).unwrap();
    let b = random_template(128, rng).unwrap();
    let view = |x| capture_view(Operation::Retrieve { x, receiver: &receiver }, &state, [1; 32], [2; 32]).unwrap();
    ensure(view(&a) == view(&b), "batch views differ")
}

pub fn run() -> CliResult {
    let checks: [(&str, Check); 6] = [
        ("templates", templates),
        ("elgamal", elgamal),
        ("shares", shares),
        ("index", index),
        ("protocol", protocol),
        ("transcripts", transcripts),
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(0x5e1f);
    let mut failed = 0;
    for (name, check) in checks {
        match check(&mut rng) {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} self-test(s) failed")));
    }
    Ok(())
}
