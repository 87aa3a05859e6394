use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const SMALL: &str = "\
n_bits = 128
lsh_bits = 6
lsh_functions = 4
bloom_functions = 2
buckets = 128
bucket_capacity = 8
threshold = 2
lambda_min = 13
lambda_max = 38
tag_bits = 16
group = schnorr61
mode = base
";

fn etse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etse"))
        .args(args)
        .env_remove("ETSE_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn seed(byte: u8) -> String {
    format!("{byte:02x}").repeat(32)
}

fn deployment(root: &Path, name: &str, seed_byte: u8) -> std::path::PathBuf {
    let cfg = root.join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let dir = root.join(name);
    let o = etse(&["keygen", "--config", s(&cfg), "--out", s(&dir), "--seed", &seed(seed_byte)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(index: &Path) -> (Served, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_etse"))
        .args(["serve", "--index", s(index), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_owned();
    (Served(child), addr)
}

#[test]
fn enroll_then_identify() {
    let root = tempfile::tempdir().unwrap();
    let dir = deployment(root.path(), "dep", 1);
    let tdir = root.path().join("templates");
    let o = etse(&["enroll", "--dir", s(&dir), "--synthetic", "5", "--template-dir", s(&tdir), "--seed", &seed(2)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("enrolled ")).count(), 5);

    let probe = root.path().join("probe.ftpl");
    let o = etse(&["template", "perturb", "--in", s(&tdir.join("user-000003.ftpl")), "--flip", "0.02", "--out", s(&probe), "--seed", &seed(3)]);
    assert_eq!(o.status.code(), Some(0));

    let o = etse(&["identify", "--dir", s(&dir), "--template", s(&probe)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("identity=user-000003"), "{out}");
    assert!(out.contains("verified=yes"), "{out}");

    let stranger = root.path().join("stranger.ftpl");
    assert_eq!(etse(&["template", "random", "--bits", "128", "--out", s(&stranger), "--seed", &seed(4)]).status.code(), Some(0));
    let o = etse(&["identify", "--dir", s(&dir), "--template", s(&stranger)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("matches = 0"));
}

#[test]
fn remote_enroll_and_identify() {
    let root = tempfile::tempdir().unwrap();
    let dir = deployment(root.path(), "dep", 5);
    let (_server, addr) = serve(&dir.join("index.fese"));
    let t = root.path().join("alice.ftpl");
    assert_eq!(etse(&["template", "random", "--bits", "128", "--out", s(&t), "--seed", &seed(6)]).status.code(), Some(0));
    let o = etse(&["enroll", "--dir", s(&dir), "--id", "alice", "--template", s(&t), "--server", &addr]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = etse(&["identify", "--dir", s(&dir), "--template", s(&t), "--server", &addr]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("identity=alice"));
}

#[test]
fn foreign_server_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let ours = deployment(root.path(), "ours", 7);
    let theirs = deployment(root.path(), "theirs", 8);
    let (_server, addr) = serve(&theirs.join("index.fese"));
    let t = root.path().join("probe.ftpl");
    assert_eq!(etse(&["template", "random", "--bits", "128", "--out", s(&t)]).status.code(), Some(0));
    let o = etse(&["identify", "--dir", s(&ours), "--template", s(&t), "--server", &addr]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_reports_error_rates() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("exp.cfg");
    std::fs::write(&cfg, format!("{SMALL}engine = protocol\nenrolled = 20\ngenuine_queries = 20\nimpostor_queries = 20\ngenuine_flip = 0.01\nseed = {}\n", seed(9))).unwrap();
    let report = root.path().join("report.txt");
    let log = root.path().join("log.csv");
    let o = etse(&["experiment", "--config", s(&cfg), "--out", s(&report), "--log", s(&log)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.lines().any(|l| l.starts_with("eta_c = ")));
    assert!(text.lines().any(|l| l.starts_with("eta_s = ")));
    assert_eq!(std::fs::read_to_string(log).unwrap().lines().count(), 41);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(etse(&["keygen"]).status.code(), Some(1));
    assert_eq!(etse(&["frobnicate"]).status.code(), Some(1));
    let root = tempfile::tempdir().unwrap();
    let bad = root.path().join("bad.cfg");
    std::fs::write(&bad, "buckets = many\n").unwrap();
    assert_eq!(etse(&["keygen", "--config", s(&bad), "--out", s(&root.path().join("x"))]).status.code(), Some(1));
    assert_eq!(etse(&["--help"]).status.code(), Some(0));
}

#[test]
fn selftest_passes() {
    let o = etse(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS ")).count(), 6);
}
