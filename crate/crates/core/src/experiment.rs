//! Statistical harness: enrol synthetic users, then measure genuine and
//! impostor queries.
//!
//! Two engines share one configuration. `protocol` runs the full encrypted
//! protocol against an in-process server. `index` uses the plaintext Bloom
//! filter with storage and the same hash functions, which isolates the
//! statistics of the index from the cost of the cryptography.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bloom::{composite_bounds, BfsStructure, CompositeFamily, Tag};
use crate::error::{Error, Result};
use crate::ident::{enroll, identify, IdentifyOptions, Registry};
use crate::lsh::analytic_collision_prob;
use crate::protocol::{keygen, OpCounts, Receiver, SchemeParams, Server};
use crate::template::{hamming_distance, perturb_bsc, random_template, BinaryTemplate};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Protocol,
    Index,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Protocol => "protocol",
            Engine::Index => "index",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "protocol" => Ok(Engine::Protocol),
            "index" => Ok(Engine::Index),
            _ => Err(Error::Config(format!("unknown engine {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub params: SchemeParams,
    pub engine: Engine,
    pub enrolled: usize,
    pub genuine_queries: usize,
    pub impostor_queries: usize,
    /// Per-bit flip probability applied to references to form genuine probes.
    pub genuine_flip: f64,
    pub seed: [u8; 32],
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: SchemeParams::default(),
            engine: Engine::Protocol,
            enrolled: 100,
            genuine_queries: 100,
            impostor_queries: 100,
            genuine_flip: 0.01,
            seed: [0; 32],
            threads: 1,
        }
    }
}

/// Parses a 64-digit hex seed.
pub fn parse_seed(s: &str) -> Result<[u8; 32]> {
    let s = s.trim();
    if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::Config("seed must be 64 hex digits".into()));
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap();
    }
    Ok(out)
}

pub fn seed_hex(seed: &[u8; 32]) -> String {
    seed.iter().map(|b| format!("{b:02x}")).collect()
}

const EXPERIMENT_KEYS: [&str; 7] = [
    "engine",
    "enrolled",
    "genuine_queries",
    "impostor_queries",
    "genuine_flip",
    "seed",
    "threads",
];

impl ExperimentConfig {
    /// Same `key = value` format as [`SchemeParams::from_config`], which
    /// receives every key not listed here.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut scheme = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            let Some((key, value)) = line.split_once('=') else {
                scheme.push_str(raw);
                scheme.push('\n');
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !EXPERIMENT_KEYS.contains(&key) {
                scheme.push_str(raw);
                scheme.push('\n');
                continue;
            }
            scheme.push('\n');
            let bad = || Error::Config(format!("line {}: bad value for {key}", lineno + 1));
            match key {
                "engine" => cfg.engine = Engine::from_name(value)?,
                "enrolled" => cfg.enrolled = value.parse().map_err(|_| bad())?,
                "genuine_queries" => cfg.genuine_queries = value.parse().map_err(|_| bad())?,
                "impostor_queries" => cfg.impostor_queries = value.parse().map_err(|_| bad())?,
                "genuine_flip" => {
                    cfg.genuine_flip = value.parse().map_err(|_| bad())?;
                    if !(0.0..=1.0).contains(&cfg.genuine_flip) {
                        return Err(bad());
                    }
                }
                "seed" => cfg.seed = parse_seed(value)?,
                "threads" => cfg.threads = value.parse::<usize>().map_err(|_| bad())?.max(1),
                _ => unreachable!(),
            }
        }
        cfg.params = SchemeParams::from_config(&scheme)?;
        Ok(cfg)
    }

    pub fn to_config(&self) -> String {
        let mut s = self.params.to_config();
        writeln!(s, "engine = {}", self.engine.name()).unwrap();
        writeln!(s, "enrolled = {}", self.enrolled).unwrap();
        writeln!(s, "genuine_queries = {}", self.genuine_queries).unwrap();
        writeln!(s, "impostor_queries = {}", self.impostor_queries).unwrap();
        writeln!(s, "genuine_flip = {}", self.genuine_flip).unwrap();
        writeln!(s, "seed = {}", seed_hex(&self.seed)).unwrap();
        writeln!(s, "threads = {}", self.threads).unwrap();
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialKind {
    Genuine,
    Impostor,
}

/// One query of an experiment, as written to the trial log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialRecord {
    pub kind: TrialKind,
    pub query: usize,
    /// Enrolled user behind a genuine probe.
    pub user: Option<usize>,
    /// Distance from the probe to that user's reference.
    pub distance: Option<usize>,
    /// Identifiers retrieved before verification.
    pub candidates: usize,
    /// Whether the genuine user was among the retrieved identifiers.
    pub retrieved: bool,
    /// Candidates that passed verification.
    pub verified: usize,
    /// Whether the genuine user passed verification.
    pub user_verified: bool,
    pub counts: OpCounts,
    pub records_fetched: u64,
}

impl TrialRecord {
    pub const CSV_HEADER: &'static str =
        "kind,query,user,distance,candidates,retrieved,verified,user_verified,decryptions,bytes_down";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            match self.kind {
                TrialKind::Genuine => "genuine",
                TrialKind::Impostor => "impostor",
            },
            self.query,
            opt(self.user),
            opt(self.distance),
            self.candidates,
            self.retrieved as u8,
            self.verified,
            self.user_verified as u8,
            self.counts.decryptions,
            self.counts.bytes_down,
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub engine: &'static str,
    pub enrolled: usize,
    pub enroll_rejected: usize,
    pub genuine_queries: usize,
    pub impostor_queries: usize,
    pub genuine_retrieved: usize,
    pub genuine_verified: usize,
    pub impostor_nonempty: usize,
    pub impostor_verified: usize,
    /// Fraction of genuine queries that missed their user.
    pub eta_c: f64,
    /// Fraction of impostor queries that retrieved anything.
    pub eta_s: f64,
    pub retrieval_rate: f64,
    pub verified_rate: f64,
    /// Retrieval rate predicted from the flip rate, ignoring Bloom collisions.
    pub analytic_retrieval_rate: f64,
    /// `(ε2 + (1-ε2)/m)^|H^c|` with `ε2` taken at `λ_max`; only meaningful
    /// for full intersection.
    pub soundness_bound: f64,
    pub mean_candidates_genuine: f64,
    pub max_candidates_genuine: usize,
    pub mean_candidates_impostor: f64,
    pub max_candidates_impostor: usize,
    /// Operation counts summed over all queries.
    pub totals: OpCounts,
    pub records_fetched: u64,
    pub keygen_time: Duration,
    pub enroll_time: Duration,
    pub genuine_time: Duration,
    pub impostor_time: Duration,
}

impl ExperimentReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let q = (self.genuine_queries + self.impostor_queries).max(1) as f64;
        let per = |v: u64| v as f64 / q;
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("engine", self.engine.into());
        kv("enrolled", self.enrolled.to_string());
        kv("enroll_rejected", self.enroll_rejected.to_string());
        kv("genuine_queries", self.genuine_queries.to_string());
        kv("impostor_queries", self.impostor_queries.to_string());
        kv("genuine_retrieved", self.genuine_retrieved.to_string());
        kv("genuine_verified", self.genuine_verified.to_string());
        kv("impostor_nonempty", self.impostor_nonempty.to_string());
        kv("impostor_verified", self.impostor_verified.to_string());
        kv("eta_c", format!("{:.6}", self.eta_c));
        kv("eta_s", format!("{:.6}", self.eta_s));
        kv("retrieval_rate", format!("{:.6}", self.retrieval_rate));
        kv("verified_rate", format!("{:.6}", self.verified_rate));
        kv("analytic_retrieval_rate", format!("{:.6}", self.analytic_retrieval_rate));
        kv("soundness_bound", format!("{:.6e}", self.soundness_bound));
        kv("mean_candidates_genuine", format!("{:.4}", self.mean_candidates_genuine));
        kv("max_candidates_genuine", self.max_candidates_genuine.to_string());
        kv("mean_candidates_impostor", format!("{:.4}", self.mean_candidates_impostor));
        kv("max_candidates_impostor", self.max_candidates_impostor.to_string());
        kv("lsh_evaluations_per_query", format!("{:.2}", per(self.totals.lsh_evaluations)));
        kv("bloom_hashes_per_query", format!("{:.2}", per(self.totals.bloom_hashes)));
        kv("pir_requests_per_query", format!("{:.2}", per(self.totals.pir_requests)));
        kv("buckets_fetched_per_query", format!("{:.2}", per(self.totals.buckets_fetched)));
        kv("bytes_up_per_query", format!("{:.1}", per(self.totals.bytes_up)));
        kv("bytes_down_per_query", format!("{:.1}", per(self.totals.bytes_down)));
        kv("decryptions_per_query", format!("{:.2}", per(self.totals.decryptions)));
        kv("discrete_logs_per_query", format!("{:.2}", per(self.totals.discrete_logs)));
        kv("records_fetched_per_query", format!("{:.3}", per(self.records_fetched)));
        kv("keygen_ms", format!("{:.1}", ms(self.keygen_time)));
        kv("enroll_ms", format!("{:.1}", ms(self.enroll_time)));
        kv("genuine_ms", format!("{:.1}", ms(self.genuine_time)));
        kv("impostor_ms", format!("{:.1}", ms(self.impostor_time)));
        s
    }
}

/// `P(Bin(n, p) >= k)`.
pub fn binomial_tail(n: usize, p: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut below = 0.0;
    for i in 0..k {
        below += pmf;
        pmf *= (n - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
    }
    (1.0 - below).max(0.0)
}

/// Chance that a probe at BSC flip rate `flip` meets the threshold, counting
/// only LSH collisions.
pub fn analytic_retrieval_rate(params: &SchemeParams, flip: f64) -> f64 {
    let per_group = (1.0 - flip).powi(params.lsh_bits as i32);
    let groups = params.threshold.div_ceil(params.bloom_functions);
    binomial_tail(params.lsh_functions, per_group, groups)
}

enum Backend {
    Protocol {
        server: Box<Server>,
        receiver: Box<Receiver>,
        registry: Registry,
    },
    Index {
        composite: CompositeFamily,
        index: BfsStructure,
    },
}

impl Backend {
    fn query(&self, params: &SchemeParams, probe: &BinaryTemplate, user_id: Option<u64>) -> Result<(TrialRecord, BTreeSet<u64>)> {
        let mut rec = TrialRecord {
            kind: TrialKind::Impostor,
            query: 0,
            user: None,
            distance: None,
            candidates: 0,
            retrieved: false,
            verified: 0,
            user_verified: false,
            counts: OpCounts::default(),
            records_fetched: 0,
        };
        let verified_ids: BTreeSet<u64>;
        match self {
            Backend::Protocol {
                server,
                receiver,
                registry,
            } => {
                let out = identify(probe, receiver, registry, &mut server.connect(), IdentifyOptions::default())?;
                rec.candidates = out.candidates.len();
                rec.retrieved = user_id.is_some_and(|u| out.candidates.iter().any(|c| c.identifier == u));
                verified_ids = out.matches().map(|c| c.identifier).collect();
                rec.counts = out.counts;
                rec.records_fetched = out.records_fetched;
            }
            Backend::Index { composite, index } => {
                let tags = index.lookup(composite, probe, params.threshold)?;
                rec.candidates = tags.len();
                rec.retrieved = user_id.is_some_and(|u| tags.contains(&Tag(u)));
                rec.counts.lsh_evaluations = params.lsh_functions as u64;
                rec.counts.bloom_hashes = params.composite_size() as u64;
                // No payloads to check: every retrieved tag counts as verified.
                verified_ids = tags.iter().map(|t| t.0).collect();
            }
        }
        rec.verified = verified_ids.len();
        rec.user_verified = user_id.is_some_and(|u| verified_ids.contains(&u));
        Ok((rec, verified_ids))
    }
}

/// Runs the experiment. Returns the report and one record per query.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<TrialRecord>)> {
    let p = &cfg.params;
    p.validate()?;
    if cfg.enrolled == 0 && cfg.genuine_queries > 0 {
        return Err(Error::Config("genuine queries need at least one enrolled user".into()));
    }
    let mut master = ChaCha20Rng::from_seed(cfg.seed);
    let keygen_seed: [u8; 32] = master.random();
    let server_seed: [u8; 32] = master.random();
    let enroll_seed: [u8; 32] = master.random();
    let query_seed: [u8; 32] = master.random();
    let mut report = ExperimentReport {
        engine: cfg.engine.name(),
        genuine_queries: cfg.genuine_queries,
        impostor_queries: cfg.impostor_queries,
        ..ExperimentReport::default()
    };

    let t = Instant::now();
    let (public, secret, state) = keygen(p, keygen_seed)?;
    report.keygen_time = t.elapsed();

    let t = Instant::now();
    let mut rng = ChaCha20Rng::from_seed(enroll_seed);
    let mut references: Vec<(BinaryTemplate, Option<u64>)> = Vec::with_capacity(cfg.enrolled);
    let backend = match cfg.engine {
        Engine::Protocol => {
            let server = Server::new(state, server_seed);
            let mut registry = Registry::new(p.buckets);
            for i in 0..cfg.enrolled {
                let b = random_template(p.n_bits, &mut rng)?;
                let id = match enroll(&format!("user-{i:06}"), &b, &public, &mut registry, &mut server.connect(), &mut rng) {
                    Ok(u) => Some(u.identifier),
                    Err(Error::EnrollmentRejected { .. }) => None,
                    Err(e) => return Err(e),
                };
                references.push((b, id));
            }
            Backend::Protocol {
                server: Box::new(server),
                receiver: Box::new(Receiver::new(secret)),
                registry,
            }
        }
        Engine::Index => {
            let mut index = BfsStructure::with_capacity(p.buckets, p.bucket_capacity);
            let composite = public.composite.clone();
            let mut next = 0u64;
            for _ in 0..cfg.enrolled {
                let b = random_template(p.n_bits, &mut rng)?;
                let id = match index.add(&composite, &b, Tag(next)) {
                    Ok(()) => {
                        next += 1;
                        Some(next - 1)
                    }
                    Err(Error::Overflow { .. }) => None,
                    Err(e) => return Err(e),
                };
                references.push((b, id));
            }
            Backend::Index { composite, index }
        }
    };
    report.enroll_time = t.elapsed();
    report.enrolled = references.iter().filter(|r| r.1.is_some()).count();
    report.enroll_rejected = references.len() - report.enrolled;

    let run = |kind: TrialKind, q: usize| -> Result<TrialRecord> {
        let mut rng = ChaCha20Rng::from_seed(query_seed);
        rng.set_stream(match kind {
            TrialKind::Genuine => q as u64,
            TrialKind::Impostor => (1 << 63) | q as u64,
        });
        let (probe, user, id, distance) = match kind {
            TrialKind::Genuine => {
                let u = q % references.len();
                let (b, id) = &references[u];
                let probe = perturb_bsc(b, cfg.genuine_flip, &mut rng)?;
                let d = hamming_distance(b, &probe)?;
                (probe, Some(u), *id, Some(d))
            }
            TrialKind::Impostor => (random_template(p.n_bits, &mut rng)?, None, None, None),
        };
        let (mut record, _) = backend.query(p, &probe, id)?;
        record.kind = kind;
        record.query = q;
        record.user = user;
        record.distance = distance;
        Ok(record)
    };

    let mut records = Vec::with_capacity(cfg.genuine_queries + cfg.impostor_queries);
    for (kind, n) in [
        (TrialKind::Genuine, cfg.genuine_queries),
        (TrialKind::Impostor, cfg.impostor_queries),
    ] {
        let t = Instant::now();
        let batch = parallel_map(n, cfg.threads, |q| run(kind, q))?;
        match kind {
            TrialKind::Genuine => report.genuine_time = t.elapsed(),
            TrialKind::Impostor => report.impostor_time = t.elapsed(),
        }
        records.extend(batch);
    }

    summarize(&mut report, &records, p, cfg.genuine_flip)?;
    Ok((report, records))
}

fn parallel_map<T: Send, F: Fn(usize) -> Result<T> + Sync>(n: usize, threads: usize, f: F) -> Result<Vec<T>> {
    if threads <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    let f = &f;
    let mut parts: Vec<Vec<(usize, T)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| s.spawn(move || (k..n).step_by(threads).map(|q| f(q).map(|v| (q, v))).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut all: Vec<(usize, T)> = parts.drain(..).flatten().collect();
    all.sort_by_key(|(q, _)| *q);
    Ok(all.into_iter().map(|(_, v)| v).collect())
}

fn summarize(r: &mut ExperimentReport, records: &[TrialRecord], p: &SchemeParams, flip: f64) -> Result<()> {
    let (mut g_sum, mut i_sum) = (0usize, 0usize);
    for rec in records {
        r.totals.add(&rec.counts);
        r.records_fetched += rec.records_fetched;
        match rec.kind {
            TrialKind::Genuine => {
                r.genuine_retrieved += rec.retrieved as usize;
                r.genuine_verified += rec.user_verified as usize;
                g_sum += rec.candidates;
                r.max_candidates_genuine = r.max_candidates_genuine.max(rec.candidates);
            }
            TrialKind::Impostor => {
                r.impostor_nonempty += (rec.candidates > 0) as usize;
                r.impostor_verified += (rec.verified > 0) as usize;
                i_sum += rec.candidates;
                r.max_candidates_impostor = r.max_candidates_impostor.max(rec.candidates);
            }
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    r.retrieval_rate = rate(r.genuine_retrieved, r.genuine_queries);
    r.verified_rate = rate(r.genuine_verified, r.genuine_queries);
    r.eta_c = if r.genuine_queries == 0 { 0.0 } else { 1.0 - r.retrieval_rate };
    r.eta_s = rate(r.impostor_nonempty, r.impostor_queries);
    r.mean_candidates_genuine = rate(g_sum, r.genuine_queries);
    r.mean_candidates_impostor = rate(i_sum, r.impostor_queries);
    r.analytic_retrieval_rate = analytic_retrieval_rate(p, flip);
    let eps2 = analytic_collision_prob(p.lambda_max as f64, p.n_bits, p.lsh_bits)?;
    r.soundness_bound = composite_bounds(0.0, eps2, p.buckets, p.composite_size())?.soundness;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::GroupId;

    #[test]
    fn binomial_tail_values() {
        assert!((binomial_tail(8, 0.5, 0) - 1.0).abs() < 1e-15);
        assert!((binomial_tail(8, 0.5, 8) - 1.0 / 256.0).abs() < 1e-15);
        assert!((binomial_tail(8, 0.5, 4) - 163.0 / 256.0).abs() < 1e-12);
        // P(Bin(8, 0.99^8) = 8) = 0.99^64
        let q = 0.99f64.powi(8);
        assert!((binomial_tail(8, q, 8) - 0.99f64.powi(64)).abs() < 1e-12);
        assert!((binomial_tail(8, 0.95f64.powi(8), 3) - 0.979321).abs() < 1e-6);
        assert_eq!(binomial_tail(3, 0.2, 4), 0.0);
    }

    #[test]
    fn config_round_trip() {
        let text = "# desk run\nengine = index\nenrolled = 20\nbuckets = 512\ngenuine_flip = 0.02\nthreshold = full\n";
        let cfg = ExperimentConfig::from_config(text).unwrap();
        assert_eq!(cfg.engine, Engine::Index);
        assert_eq!(cfg.enrolled, 20);
        assert_eq!(cfg.params.buckets, 512);
        assert_eq!(cfg.params.threshold, 32);
        assert_eq!(ExperimentConfig::from_config(&cfg.to_config()).unwrap(), cfg);
        assert!(ExperimentConfig::from_config("enrolled = many").is_err());
        assert!(ExperimentConfig::from_config("colour = blue").is_err());
    }

    #[test]
    fn seed_hex_round_trip() {
        let s = [0xab; 32];
        assert_eq!(parse_seed(&seed_hex(&s)).unwrap(), s);
        assert!(parse_seed("abc").is_err());
    }

    #[test]
    fn engines_agree_and_runs_repeat() {
        let mut cfg = ExperimentConfig {
            params: SchemeParams {
                n_bits: 128,
                lsh_bits: 6,
                lsh_functions: 4,
                bloom_functions: 2,
                buckets: 256,
                bucket_capacity: 8,
                threshold: 8,
                lambda_min: 13,
                lambda_max: 38,
                tag_bits: 16,
                group: GroupId::Schnorr61,
                ..SchemeParams::default()
            },
            enrolled: 20,
            genuine_queries: 30,
            impostor_queries: 30,
            genuine_flip: 0.02,
            seed: [9; 32],
            ..ExperimentConfig::default()
        };
        let (a, ra) = run_experiment(&cfg).unwrap();
        cfg.threads = 3;
        let (b, rb) = run_experiment(&cfg).unwrap();
        // The receiver memoizes discrete logs, so only their count depends
        // on query order.
        let strip = |rs: &[TrialRecord]| {
            rs.iter()
                .cloned()
                .map(|mut r| {
                    r.counts.discrete_logs = 0;
                    r
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&ra), strip(&rb));
        assert_eq!(a.genuine_retrieved, b.genuine_retrieved);
        cfg.engine = Engine::Index;
        let (c, rc) = run_experiment(&cfg).unwrap();
        assert_eq!(a.genuine_retrieved, c.genuine_retrieved);
        assert_eq!(a.impostor_nonempty, c.impostor_nonempty);
        for (x, y) in ra.iter().zip(&rc) {
            assert_eq!((x.candidates, x.retrieved), (y.candidates, y.retrieved));
        }
        let text = a.to_text();
        assert!(text.contains("eta_c = "));
        assert!(text.contains("eta_s = "));
        assert!(ra[0].to_csv().starts_with("genuine,0,0,"));
    }
}
