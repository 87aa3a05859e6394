//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::BTreeSet;
use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use etse::bloom::{bloom_hash, composite_bounds, false_positive_probability, BfsStructure, BloomKey, CompositeFamily, Tag};
use etse::crypto::{
    combine, decrypt, discrete_log_small, encrypt, raise, rerandomize, split_secret, BsgsTable, GroupId, Keypair,
};
use etse::experiment::{run_experiment, Engine, ExperimentConfig};
use etse::ident::{enroll, identify, IdentifyOptions, Registry};
use etse::lsh::{estimate_eps, LshFamily};
use etse::net::{serve, TcpChannel};
use etse::pir::{pir_query, pis_update, BucketStore, FnChannel, PirServer, QueryTransport, Recording, UpdateTransport};
use etse::protocol::{keygen, send, Mode, Receiver, SchemeParams, SenderState, Server, ServerState};
use etse::template::{perturb_bsc, perturb_exact, random_template};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_time(o: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let detail = format!("{}; {:.1}s (limit {}s)", o.detail, elapsed.as_secs_f64(), limit.as_secs());
    outcome(o.pass && elapsed < limit, detail)
}

fn index_params() -> SchemeParams {
    SchemeParams {
        buckets: 4096,
        bucket_capacity: 32,
        ..SchemeParams::default()
    }
}

/// Bloom membership false positives at ν = 3, m = 100, |D| = 3.
fn bloom_false_positives() -> Outcome {
    let (nu, m, d, probes) = (3, 100, 3, 100_000);
    let expected = false_positive_probability(nu, m, d).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let key = BloomKey::random(&mut rng);
    let mut hits = 0u64;
    for _ in 0..probes {
        let mut bfs = BfsStructure::new(m);
        for tag in 0..d {
            let y: [u8; 16] = rng.random();
            let alphas: Vec<usize> = (0..nu).map(|j| bloom_hash(&key, j, &y, m)).collect();
            bfs.insert_at(&alphas, Tag(tag as u64)).unwrap();
        }
        let probe: [u8; 16] = rng.random();
        let alphas: Vec<usize> = (0..nu).map(|j| bloom_hash(&key, j, &probe, m)).collect();
        hits += bfs.all_occupied(&alphas) as u64;
    }
    let rate = hits as f64 / probes as f64;
    let rel = (rate - expected).abs() / expected;
    outcome(
        rel <= 0.30,
        format!("rate {rate:.3e} vs {expected:.3e}, relative error {:.1}%", rel * 100.0),
    )
}

/// No far pair is ever captured under full intersection.
fn soundness() -> Outcome {
    let p = index_params();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let lsh = LshFamily::build(p.n_bits, p.lsh_bits, p.lsh_functions, &mut rng).unwrap();
    let eps = estimate_eps(&lsh, p.lambda_min, p.lambda_max, 2000, &mut rng).unwrap();
    let comp = CompositeFamily::new(lsh, p.bloom_functions, p.buckets, BloomKey::random(&mut rng)).unwrap();
    let bound = composite_bounds(eps.eps1, eps.eps2, p.buckets, p.composite_size()).unwrap().soundness;

    let mut index = BfsStructure::new(p.buckets);
    let refs: Vec<_> = (0..1000).map(|_| random_template(p.n_bits, &mut rng).unwrap()).collect();
    for (i, x) in refs.iter().enumerate() {
        index.add(&comp, x, Tag(i as u64)).unwrap();
    }
    let mut captures = 0;
    for trial in 0..10_000 {
        let probe = perturb_exact(&refs[trial % refs.len()], p.lambda_max + 1, &mut rng).unwrap();
        captures += !index.lookup(&comp, &probe, p.composite_size()).unwrap().is_empty() as usize;
    }
    outcome(
        captures == 0,
        format!("{captures} captures in 10000 trials; measured eps2 {:.4}, bound {bound:.2e}", eps.eps2),
    )
}

fn completeness_config(threshold: usize, flip: f64, seed: u8) -> ExperimentConfig {
    ExperimentConfig {
        params: SchemeParams {
            threshold,
            ..index_params()
        },
        engine: Engine::Index,
        enrolled: 500,
        genuine_queries: 1000,
        impostor_queries: 0,
        genuine_flip: flip,
        seed: [seed; 32],
        threads: 1,
    }
}

/// Full intersection at flip 0.01 tracks `(0.99^8)^8`.
fn completeness_full() -> Outcome {
    let cfg = completeness_config(32, 0.01, 3);
    // Disjoint sampled positions make the eight functions independent.
    let (public, _, _) = keygen(&cfg.params, [0; 32]).unwrap();
    let lsh = public.composite.lsh();
    let mut seen = BTreeSet::new();
    let disjoint = (0..lsh.len()).all(|i| lsh.positions(i).iter().all(|&b| seen.insert(b)));
    let oracle = 0.99f64.powi(64);
    let (report, _) = run_experiment(&cfg).unwrap();
    let diff = (report.retrieval_rate - oracle).abs();
    outcome(
        diff <= 0.05 && disjoint,
        format!("rate {:.3} vs {oracle:.3}, |diff| {diff:.3}, disjoint positions {disjoint}", report.retrieval_rate),
    )
}

/// Three of eight groups at flip 0.05 retrieves at least 99% of the time.
fn completeness_threshold() -> Outcome {
    let cfg = completeness_config(12, 0.05, 4);
    let per_group = 0.95f64.powi(8);
    let oracle = Binomial::new(per_group, 8).unwrap().sf(2);
    let (report, _) = run_experiment(&cfg).unwrap();
    outcome(
        report.retrieval_rate >= 0.99,
        format!(
            "rate {:.3} (need >= 0.99); binomial tail P(Bin(8, {per_group:.4}) >= 3) = {oracle:.4}",
            report.retrieval_rate
        ),
    )
}

/// Full protocol, 500 users: genuine rate as in the full-intersection case,
/// impostors always empty.
fn end_to_end() -> Outcome {
    let cfg = ExperimentConfig {
        params: index_params(),
        engine: Engine::Protocol,
        enrolled: 500,
        genuine_queries: 1000,
        impostor_queries: 10_000,
        genuine_flip: 0.01,
        seed: [5; 32],
        threads: 1,
    };
    let oracle = 0.99f64.powi(64);
    let (r, _) = run_experiment(&cfg).unwrap();
    let diff = (r.verified_rate - oracle).abs();
    outcome(
        diff <= 0.05 && r.impostor_nonempty == 0 && r.enroll_rejected == 0,
        format!(
            "verified rate {:.3} vs {oracle:.3}; {} of {} impostor queries non-empty; {} rejected enrolments",
            r.verified_rate, r.impostor_nonempty, r.impostor_queries, r.enroll_rejected
        ),
    )
}

fn elgamal_laws() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let group = GroupId::Ristretto255;
    let kp = Keypair::generate(group, &mut rng);
    let mut bad = 0;
    for _ in 0..1000 {
        let a = group.random_element(&mut rng);
        let b = group.random_element(&mut rng);
        let ca = encrypt(&kp.public, &a, &mut rng);
        let cb = encrypt(&kp.public, &b, &mut rng);
        let e = group.random_nonzero_exponent(&mut rng);
        let fresh = rerandomize(&kp.public, &ca, &mut rng);
        let ok = decrypt(&kp.secret, &ca) == a
            && decrypt(&kp.secret, &ca.mul(&cb)) == a.op(&b)
            && decrypt(&kp.secret, &ca.pow(&e).unwrap()) == a.pow(&e)
            && fresh != ca
            && decrypt(&kp.secret, &fresh) == a;
        bad += !ok as usize;
    }
    outcome(bad == 0, format!("{bad} of 1000 cases violated a law"))
}

fn share_recovery() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let group = GroupId::Ristretto255;
    let mut bad = 0;
    for _ in 0..100 {
        let s = rng.random_range(0..1u64 << 20);
        let t = group.random_nonzero_exponent(&mut rng);
        let n = rng.random_range(2..40);
        let set = split_secret(group, s, n, 20, &mut rng).unwrap();
        let product = combine(group, &raise(set.shares(), &t));
        let base = group.pow_gen(&t);
        let ok = product == base.pow(&group.exponent(s)) && BsgsTable::new(&base, 1 << 20).solve(&product) == Some(s);
        bad += !ok as usize;
    }
    let table = BsgsTable::new(&group.generator(), 1 << 10);
    let mut mismatched = 0;
    for s in 0..1u64 << 10 {
        let target = group.pow_gen(&group.exponent(s));
        let linear = discrete_log_small(&group.generator(), &target, 1 << 10);
        mismatched += (table.solve(&target) != linear || linear != Some(s)) as usize;
    }
    outcome(
        bad == 0 && mismatched == 0,
        format!("{bad} of 100 recoveries failed; {mismatched} of 1024 table lookups disagreed with the scan"),
    )
}

fn transport_views() -> Outcome {
    let (m, l, w) = (64, 4, 128);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut image = vec![0u8; m * l * w];
    rand::Rng::fill_bytes(&mut rng, &mut image);
    let mut store = BucketStore::new(m, l, w).unwrap();
    store.replace_all(&image).unwrap();

    let server = PirServer::new(store.clone());
    let layout = server.layout();
    let view = |a: usize| {
        let mut rec = Recording::new(FnChannel(|f| Ok(server.handle(f))));
        pir_query(&mut rec, QueryTransport::ObliviousBatch, &layout, a).unwrap();
        rec.into_parts().1
    };
    let first = view(0);
    let batch_equal = (1..m).all(|a| view(a) == first);

    let update_view = |a: usize, val: &[u8], rng: &mut ChaCha20Rng| {
        let server = PirServer::new(store.clone());
        let mut rec = Recording::new(FnChannel(|f| Ok(server.handle(f))));
        let mut rerand = |s: &[u8]| {
            let mask: u8 = rng.random();
            Ok(s.iter().map(|b| b ^ mask).collect())
        };
        pis_update(&mut rec, UpdateTransport::FullRewrite, &layout, a, a % l, val, &mut rerand).unwrap();
        rec.into_parts().1
    };
    let mut shapes = BTreeSet::new();
    for _ in 0..20 {
        let a = rng.random_range(0..m);
        let mut val = vec![0u8; w];
        rand::Rng::fill_bytes(&mut rng, &mut val);
        shapes.insert(update_view(a, &val, &mut rng).shape());
    }
    outcome(
        batch_equal && shapes.len() == 1,
        format!("batch views identical over {m} indices: {batch_equal}; distinct rewrite shapes over 20 updates: {}", shapes.len()),
    )
}

fn mode_equivalence() -> Outcome {
    let base = SchemeParams {
        buckets: 2048,
        bucket_capacity: 12,
        tag_bits: 20,
        ..SchemeParams::default()
    };
    let ext = SchemeParams {
        mode: Mode::Extended,
        ..base.clone()
    };
    let seed = [8; 32];
    let worlds: Vec<_> = [base, ext]
        .iter()
        .map(|p| {
            let (public, secret, state) = keygen(p, seed).unwrap();
            (public, Receiver::new(secret), Server::new(state, seed))
        })
        .collect();
    let mut senders = [SenderState::new(2048), SenderState::new(2048)];
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let refs: Vec<_> = (0..100).map(|_| random_template(256, &mut rng).unwrap()).collect();
    for x in &refs {
        let send_rng = ChaCha20Rng::from_seed(rng.random());
        for ((public, _, server), sender) in worlds.iter().zip(senders.iter_mut()) {
            send(x, public, sender, &mut server.connect(), &mut send_rng.clone()).unwrap();
        }
    }
    let mut agree = 0;
    let mut nonempty = 0;
    for q in 0..100 {
        let x = &refs[q];
        let probe = match q % 3 {
            0 => x.clone(),
            1 => perturb_bsc(x, 0.01, &mut rng).unwrap(),
            _ => random_template(256, &mut rng).unwrap(),
        };
        let got: Vec<BTreeSet<u64>> = worlds
            .iter()
            .map(|(_, receiver, server)| receiver.retrieve(&probe, &mut server.connect()).unwrap().identifiers)
            .collect();
        agree += (got[0] == got[1]) as usize;
        nonempty += !got[0].is_empty() as usize;
    }
    outcome(
        agree == 100,
        format!("{agree} of 100 queries agree ({nonempty} non-empty)"),
    )
}

fn serialization_and_remote() -> Outcome {
    let p = SchemeParams {
        buckets: 512,
        bucket_capacity: 12,
        mode: Mode::Extended,
        ..SchemeParams::default()
    };
    let (public, secret, state) = keygen(&p, [10; 32]).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.fese");
    state.save(&path).unwrap();
    let loaded = ServerState::load(&path).unwrap();
    let file_identical = loaded.to_bytes() == std::fs::read(&path).unwrap() && loaded == state;

    let local = Server::new(state.clone(), [11; 32]);
    let remote = Arc::new(Server::new(loaded, [11; 32]));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let srv = Arc::clone(&remote);
    std::thread::spawn(move || serve(listener, srv, None));

    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let refs: Vec<_> = (0..20).map(|_| random_template(256, &mut rng).unwrap()).collect();
    let probes: Vec<_> = refs.iter().map(|x| perturb_bsc(x, 0.01, &mut rng).unwrap()).collect();

    let run = |ch: &mut dyn etse::pir::Channel, query: &mut dyn etse::pir::Channel| {
        let mut registry = Registry::new(p.buckets);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for (i, x) in refs.iter().enumerate() {
            enroll(&format!("u{i}"), x, &public, &mut registry, &mut *ch, &mut rng).unwrap();
        }
        let receiver = Receiver::new(secret.clone());
        let mut rec = Recording::new(query);
        let results: Vec<_> = probes
            .iter()
            .map(|q| identify(q, &receiver, &registry, &mut rec, IdentifyOptions::default()).unwrap())
            .collect();
        (registry, results, rec.into_parts().1)
    };
    let (reg_a, res_a, view_a) = run(&mut local.connect(), &mut local.connect());
    let (reg_b, res_b, view_b) = run(
        &mut TcpChannel::connect(addr).unwrap(),
        &mut TcpChannel::connect(addr).unwrap(),
    );
    let same_state = local.snapshot().to_bytes() == remote.snapshot().to_bytes();
    let same_results = reg_a == reg_b && res_a == res_b && view_a == view_b;
    outcome(
        file_identical && same_state && same_results,
        format!("file round trip {file_identical}; server state identical {same_state}; results and transcripts identical {same_results}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("1  bloom false-positive law", bloom_false_positives, 30),
        ("2  soundness bound", soundness, 120),
        ("3a completeness, full intersection", completeness_full, 60),
        ("3b completeness, 3-of-8 groups", completeness_threshold, 60),
        ("4  end-to-end identification", end_to_end, 300),
        ("5  elgamal laws", elgamal_laws, 10),
        ("6  share splitting and recovery", share_recovery, 30),
        ("7  transport privacy transcripts", transport_views, 60),
        ("8  mode equivalence", mode_equivalence, 120),
        ("9  serialization and remote execution", serialization_and_remote, 120),
    ];
    let mut failed = Vec::new();
    for (name, f, limit) in criteria {
        let t = Instant::now();
        let o = f();
        let o = within_time(o, t.elapsed(), Duration::from_secs(limit));
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("{} criteria failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
