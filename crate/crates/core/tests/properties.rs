use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use etse::bloom::{BfsStructure, BloomKey, CompositeFamily, Tag};
use etse::crypto::{combine, decrypt, encrypt, split_secret, GroupId, Keypair};
use etse::lsh::LshFamily;
use etse::pir::{Frame, FrameKind};
use etse::template::{hamming_distance, random_template, BinaryTemplate};

fn template(bits: usize) -> impl Strategy<Value = BinaryTemplate> {
    prop::collection::vec(any::<bool>(), bits).prop_map(|b| BinaryTemplate::from_bits(&b).unwrap())
}

fn family(seed: u64, n: usize, t: usize, mu: usize, nu: usize, m: usize) -> CompositeFamily {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let lsh = LshFamily::build(n, t, mu, &mut rng).unwrap();
    CompositeFamily::new(lsh, nu, m, BloomKey::random(&mut rng)).unwrap()
}

/// Buckets as plain lists; a tag counts for a group when every bucket of the
/// group lists it.
fn naive_lookup(buckets: &[Vec<u64>], alphas: &[usize], nu: usize, groups_needed: usize) -> BTreeSet<u64> {
    let mut candidates: BTreeSet<u64> = BTreeSet::new();
    for &a in alphas {
        candidates.extend(buckets[a].iter().copied());
    }
    candidates
        .into_iter()
        .filter(|tag| {
            alphas
                .chunks(nu)
                .filter(|group| group.iter().all(|&a| buckets[a].contains(tag)))
                .count()
                >= groups_needed
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamming_is_a_metric(a in template(97), b in template(97), c in template(97)) {
        let d = |x: &BinaryTemplate, y: &BinaryTemplate| hamming_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert_eq!(d(&a, &a.complement()), 97);
    }

    #[test]
    fn template_file_round_trip(a in template(131)) {
        prop_assert_eq!(BinaryTemplate::from_file_bytes(&a.to_file_bytes()).unwrap(), a);
    }

    #[test]
    fn exponentiation_composes(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = GroupId::Schnorr61;
        let kp = Keypair::generate(g, &mut rng);
        let x = g.random_element(&mut rng);
        let (e1, e2) = (g.random_nonzero_exponent(&mut rng), g.random_nonzero_exponent(&mut rng));
        let c = encrypt(&kp.public, &x, &mut rng);
        let twice = c.pow(&e1).unwrap().pow(&e2).unwrap();
        prop_assert_eq!(decrypt(&kp.secret, &twice), x.pow(&e1.mul(&e2)));
    }

    #[test]
    fn shares_recombine(seed in any::<u64>(), s in 0u64..1 << 20, n in 2usize..50) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = GroupId::Schnorr61;
        let set = split_secret(g, s, n, 20, &mut rng).unwrap();
        prop_assert_eq!(set.len(), n);
        prop_assert_eq!(combine(g, set.shares()), g.pow_gen(&g.exponent(s)));
    }

    #[test]
    fn bfs_has_no_false_negatives(seed in any::<u64>(), count in 1usize..40) {
        let comp = family(seed, 64, 5, 6, 3, 97);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
        let xs: Vec<_> = (0..count).map(|_| random_template(64, &mut rng).unwrap()).collect();
        let mut bfs = BfsStructure::new(97);
        for (i, x) in xs.iter().enumerate() {
            bfs.add(&comp, x, Tag(i as u64)).unwrap();
        }
        for (i, x) in xs.iter().enumerate() {
            for tau in [1, 9, 18] {
                prop_assert!(bfs.lookup(&comp, x, tau).unwrap().contains(&Tag(i as u64)));
            }
        }
    }

    #[test]
    fn bfs_matches_naive_lists(seed in any::<u64>(), count in 1usize..30, tau in 1usize..=18) {
        let (nu, m) = (3, 53);
        let comp = family(seed, 64, 4, 6, nu, m);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 2);
        let mut bfs = BfsStructure::new(m);
        let mut lists = vec![Vec::new(); m];
        let mut xs = Vec::new();
        for i in 0..count as u64 {
            let x = random_template(64, &mut rng).unwrap();
            bfs.add(&comp, &x, Tag(i)).unwrap();
            for a in comp.indices(&x).unwrap() {
                if !lists[a].contains(&i) {
                    lists[a].push(i);
                }
            }
            xs.push(x);
        }
        for _ in 0..10 {
            let q = random_template(64, &mut rng).unwrap();
            let mut near = xs[0].clone();
            near.flip(3);
            for probe in [q, near] {
                let got: BTreeSet<u64> = bfs.lookup(&comp, &probe, tau).unwrap().into_iter().map(|t| t.0).collect();
                let alphas = comp.indices(&probe).unwrap();
                prop_assert_eq!(got, naive_lookup(&lists, &alphas, nu, tau.div_ceil(nu)));
            }
        }
    }

    #[test]
    fn frames_round_trip(kind in prop::sample::select(vec![
        FrameKind::QueryDirect, FrameKind::RespBucket, FrameKind::SendPayload, FrameKind::Record,
    ]), payload in prop::collection::vec(any::<u8>(), 0..300)) {
        let f = Frame::new(kind, payload);
        let bytes = f.encode();
        prop_assert_eq!(bytes.len(), 5 + f.payload.len());
        prop_assert_eq!(Frame::decode(&bytes).unwrap(), f.clone());
        let mut cursor = std::io::Cursor::new(bytes);
        prop_assert_eq!(Frame::read_from(&mut cursor).unwrap(), Some(f));
    }
}
