//! Send and retrieve over an encrypted Bloom-filter index.
//!
//! A sender hashes a template with the composite family, stores the sealed
//! template under a fresh identifier and writes one encrypted slot into each
//! of the `μ·ν` buckets it hashes to. The receiver hashes a probe the same
//! way, fetches those buckets, decrypts, and keeps the identifiers that
//! appear often enough.

mod client;
pub mod games;
mod keys;
mod params;
mod server;
mod state;

pub use client::{fetch_records, hello, send, OpCounts, Receiver, Retrieval, SenderState};
pub use keys::{IndexHeader, PublicBundle, SecretBundle};
pub use params::{Mode, SchemeParams};
pub use server::{LocalChannel, Server, Session};
pub use state::{keygen, ServerState, Slot};

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::games::{capture_view, client_view, Operation, Simulator};
    use super::*;
    use crate::crypto::{payload, GroupId};
    use crate::error::Error;
    use crate::pir::{Direction, QueryTransport, UpdateTransport};
    use crate::template::{perturb_exact, random_template, BinaryTemplate};

    fn small(mode: Mode) -> SchemeParams {
        SchemeParams {
            n_bits: 128,
            lsh_bits: 6,
            lsh_functions: 4,
            bloom_functions: 2,
            buckets: 64,
            bucket_capacity: 6,
            threshold: 8,
            lambda_min: 13,
            lambda_max: 38,
            tag_bits: 16,
            group: GroupId::Schnorr61,
            mode,
            ..SchemeParams::default()
        }
    }

    struct World {
        public: PublicBundle,
        receiver: Receiver,
        server: Server,
        sender: SenderState,
        rng: ChaCha20Rng,
    }

    fn world(params: &SchemeParams, seed: u8) -> World {
        let (public, secret, state) = keygen(params, [seed; 32]).unwrap();
        World {
            sender: SenderState::new(params.buckets),
            public,
            receiver: Receiver::new(secret),
            server: Server::new(state, [seed ^ 0xff; 32]),
            rng: ChaCha20Rng::seed_from_u64(seed as u64),
        }
    }

    impl World {
        fn send(&mut self, x: &BinaryTemplate) -> crate::Result<u64> {
            send(x, &self.public, &mut self.sender, &mut self.server.connect(), &mut self.rng)
        }

        fn retrieve(&self, x: &BinaryTemplate) -> BTreeSet<u64> {
            self.receiver.retrieve(x, &mut self.server.connect()).unwrap().identifiers
        }
    }

    #[test]
    fn send_then_retrieve_exact() {
        for mode in [Mode::Base, Mode::Extended] {
            let mut w = world(&small(mode), 1);
            let xs: Vec<_> = (0..10).map(|_| random_template(128, &mut w.rng).unwrap()).collect();
            let ids: Vec<u64> = xs.iter().map(|x| w.send(x).unwrap()).collect();
            assert_eq!(ids, (0..10).collect::<Vec<_>>());
            for (x, id) in xs.iter().zip(&ids) {
                assert_eq!(w.retrieve(x), BTreeSet::from([*id]), "{mode:?}");
            }
        }
    }

    #[test]
    fn impostor_gets_nothing() {
        let mut w = world(&small(Mode::Base), 2);
        for _ in 0..5 {
            let x = random_template(128, &mut w.rng).unwrap();
            w.send(&x).unwrap();
        }
        let probe = random_template(128, &mut w.rng).unwrap();
        assert!(w.retrieve(&probe).is_empty());
    }

    #[test]
    fn modes_agree_on_same_seed() {
        let mut b = world(&small(Mode::Base), 3);
        let mut e = world(&small(Mode::Extended), 3);
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let xs: Vec<_> = (0..12).map(|_| random_template(128, &mut rng).unwrap()).collect();
        for x in &xs {
            assert_eq!(b.send(x).unwrap(), e.send(x).unwrap());
        }
        for x in &xs {
            for d in [0, 2, 6, 60] {
                let q = perturb_exact(x, d, &mut rng).unwrap();
                assert_eq!(b.retrieve(&q), e.retrieve(&q));
            }
        }
    }

    #[test]
    fn threshold_lookup_matches_plain_filter() {
        let mut p = small(Mode::Base);
        p.threshold = 2;
        p.bucket_capacity = 12;
        let mut w = world(&p, 13);
        let mut plain = crate::bloom::BfsStructure::new(p.buckets);
        let xs: Vec<_> = (0..8).map(|_| random_template(128, &mut w.rng).unwrap()).collect();
        for x in &xs {
            let id = w.send(x).unwrap();
            plain.add(&w.public.composite, x, crate::bloom::Tag(id)).unwrap();
        }
        let mut padded_groups = 0;
        for i in 0..300 {
            let q = match i % 3 {
                0 => random_template(128, &mut w.rng).unwrap(),
                k => perturb_exact(&xs[i % xs.len()], 4 * k, &mut w.rng).unwrap(),
            };
            let alphas = w.public.composite.indices(&q).unwrap();
            padded_groups += alphas.chunks(2).filter(|g| g[0] == g[1]).count();
            let expected: BTreeSet<u64> = plain.lookup(&w.public.composite, &q, 2).unwrap().into_iter().map(|t| t.0).collect();
            assert_eq!(w.retrieve(&q), expected);
        }
        assert!(padded_groups > 0);
    }

    #[test]
    fn overflow_rejected_before_any_write() {
        let mut p = small(Mode::Base);
        p.bucket_capacity = 2;
        let mut w = world(&p, 4);
        let x = random_template(128, &mut w.rng).unwrap();
        w.send(&x).unwrap();
        w.send(&x).unwrap();
        let before = w.server.snapshot();
        let err = w.send(&x).unwrap_err();
        assert!(matches!(err, Error::EnrollmentRejected { .. }));
        assert_eq!(w.server.snapshot(), before);
    }

    #[test]
    fn full_rewrite_and_batch_match_direct() {
        let mut p = small(Mode::Base);
        p.query_transport = QueryTransport::ObliviousBatch;
        p.update_transport = UpdateTransport::FullRewrite;
        let mut w = world(&p, 5);
        let x = random_template(128, &mut w.rng).unwrap();
        let id = w.send(&x).unwrap();
        assert_eq!(w.retrieve(&x), BTreeSet::from([id]));
    }

    #[test]
    fn records_round_trip_and_server_sees_no_plaintext() {
        let mut w = world(&small(Mode::Base), 6);
        let x = random_template(128, &mut w.rng).unwrap();
        let id = w.send(&x).unwrap();
        let got = fetch_records(&mut w.server.connect(), QueryTransport::Direct, &BTreeSet::from([id])).unwrap();
        let back = BinaryTemplate::from_file_bytes(&payload::open(&w.receiver.bundle().sk, &got[&id]).unwrap()).unwrap();
        assert_eq!(back, x);

        let snap = w.server.snapshot();
        let image = snap.to_bytes();
        assert!(!image.windows(x.as_bytes().len()).any(|win| win == x.as_bytes()));
        let image = snap.store.as_bytes();
        let gid = w.public.group().pow_gen(&w.public.group().exponent(id)).encode();
        assert!(!image.windows(gid.len()).any(|win| win == gid));

        let missing = fetch_records(&mut w.server.connect(), QueryTransport::Direct, &BTreeSet::from([99]));
        assert!(matches!(missing, Err(Error::UnknownIdentifier(99))));
    }

    #[test]
    fn hello_detects_other_deployment() {
        let w = world(&small(Mode::Base), 7);
        let other = world(&small(Mode::Base), 8);
        hello(&mut w.server.connect(), &w.public.header()).unwrap();
        assert!(matches!(
            hello(&mut w.server.connect(), &other.public.header()),
            Err(Error::HeaderMismatch)
        ));
    }

    #[test]
    fn state_round_trips_byte_identical() {
        let mut w = world(&small(Mode::Extended), 9);
        let x = random_template(128, &mut w.rng).unwrap();
        w.send(&x).unwrap();
        let bytes = w.server.snapshot().to_bytes();
        let back = ServerState::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let mut corrupt = bytes.clone();
        corrupt[20] ^= 1;
        assert!(ServerState::from_bytes(&corrupt).is_err());
    }

    #[test]
    fn keygen_is_deterministic() {
        let (a, sa, st_a) = keygen(&small(Mode::Base), [3; 32]).unwrap();
        let (b, sb, st_b) = keygen(&small(Mode::Base), [3; 32]).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(sa.to_bytes(), sb.to_bytes());
        assert_eq!(st_a.to_bytes(), st_b.to_bytes());
        assert_eq!(PublicBundle::from_bytes(&a.to_bytes()).unwrap().to_bytes(), a.to_bytes());
        assert_eq!(SecretBundle::from_bytes(&sa.to_bytes()).unwrap().to_bytes(), sa.to_bytes());
    }

    #[test]
    fn sender_views_have_equal_shape() {
        for update in [UpdateTransport::Direct, UpdateTransport::FullRewrite] {
            let mut p = small(Mode::Extended);
            p.update_transport = update;
            let w = world(&p, 10);
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            let x0 = random_template(128, &mut rng).unwrap();
            let x1 = random_template(128, &mut rng).unwrap();
            let state = w.server.snapshot();
            let view = |x| {
                capture_view(
                    Operation::Send {
                        x,
                        bundle: &w.public,
                        sender: &w.sender,
                    },
                    &state,
                    [1; 32],
                    [2; 32],
                )
                .unwrap()
            };
            let (v0, v1) = (view(&x0), view(&x1));
            assert_eq!(v0.shape(), v1.shape());
            assert_ne!(v0, v1);
        }
    }

    #[test]
    fn receiver_views_identical_under_batch() {
        for mode in [Mode::Base, Mode::Extended] {
            let mut p = small(mode);
            p.query_transport = QueryTransport::ObliviousBatch;
            let mut w = world(&p, 11);
            let x = random_template(128, &mut w.rng).unwrap();
            w.send(&x).unwrap();
            let state = w.server.snapshot();
            let far = random_template(128, &mut w.rng).unwrap();
            let view = |x| {
                capture_view(Operation::Retrieve { x, receiver: &w.receiver }, &state, [4; 32], [5; 32]).unwrap()
            };
            assert_eq!(view(&x), view(&far));
        }
    }

    #[test]
    fn simulator_matches_real_structure() {
        let mut w = world(&small(Mode::Extended), 12);
        let xs: Vec<_> = (0..4).map(|_| random_template(128, &mut w.rng).unwrap()).collect();
        for x in &xs {
            w.send(x).unwrap();
        }
        for x in &xs {
            let q = perturb_exact(x, 3, &mut w.rng).unwrap();
            let (real, real_view) = client_view(&w.receiver, &q, w.server.connect()).unwrap();
            let sim = Simulator::new(w.public.clone(), real.identifiers.clone(), [6; 32]).unwrap();
            let (fake, fake_view) = client_view(&w.receiver, &q, sim).unwrap();
            assert_eq!(real.identifiers, fake.identifiers);
            assert_eq!(real_view.shape(), fake_view.shape());
            assert!(real_view.shape().iter().any(|(d, k, _)| *d == Direction::ToClient && *k == 0x15));
        }
    }
}
