use std::fs;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use etse::experiment::{parse_seed, run_experiment, ExperimentConfig, TrialRecord};
use etse::ident::{enroll, identify, IdentifyOptions, Registry};
use etse::net::{serve, TcpChannel, WriteHook};
use etse::pir::Channel;
use etse::protocol::{hello, keygen, PublicBundle, Receiver, SchemeParams, SecretBundle, Server, ServerState};
use etse::template::{perturb_bsc, random_template, BinaryTemplate};
use etse::Error;

use crate::{Command, RemoteArg, SeedArg, TemplateAction};

pub const PUBLIC_FILE: &str = "public.key";
pub const SECRET_FILE: &str = "secret.key";
pub const INDEX_FILE: &str = "index.fese";
pub const REGISTRY_FILE: &str = "registry.json";
pub const PARAMS_FILE: &str = "params.cfg";

pub enum Failure {
    Usage(String),
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl Failure {
    pub fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Check(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }

    /// 1 usage, 2 data or format, 3 protocol.
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Check(_) => 3,
            Failure::Lib(e) => match e {
                Error::Config(_) | Error::Parameter(_) => 1,
                Error::Format(_)
                | Error::Dimension { .. }
                | Error::HeaderMismatch
                | Error::Io(_)
                | Error::NotInGroup
                | Error::Decryption => 2,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub fn seed_of(arg: &SeedArg) -> CliResult<[u8; 32]> {
    match &arg.seed {
        Some(s) => parse_seed(s).map_err(|_| Failure::Usage("--seed needs 64 hex digits".into())),
        None => Ok(rand::random()),
    }
}

/// Reads an `FTPL` file, or a text file of `0`/`1` characters.
pub fn read_template(path: &Path) -> CliResult<BinaryTemplate> {
    let data = fs::read(path).map_err(|e| Failure::Lib(Error::Format(format!("{}: {e}", path.display()))))?;
    if data.starts_with(b"FTPL") {
        return Ok(BinaryTemplate::from_file_bytes(&data)?);
    }
    let text = String::from_utf8(data).map_err(|_| Error::Format(format!("{}: not a template", path.display())))?;
    let bits: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    Ok(BinaryTemplate::from_bit_str(&bits)?)
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Lib(Error::Format(format!("{}: {e}", path.display()))))
}

/// Writes through a temporary file so readers never see half an index.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Deployment {
    dir: PathBuf,
}

impl Deployment {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn public(&self) -> CliResult<PublicBundle> {
        Ok(PublicBundle::from_bytes(&read_file(&self.path(PUBLIC_FILE))?)?)
    }

    fn secret(&self) -> CliResult<SecretBundle> {
        Ok(SecretBundle::from_bytes(&read_file(&self.path(SECRET_FILE))?)?)
    }

    fn registry(&self, buckets: usize) -> CliResult<Registry> {
        let p = self.path(REGISTRY_FILE);
        if p.exists() {
            Ok(Registry::load(p)?)
        } else {
            Ok(Registry::new(buckets))
        }
    }

    fn state(&self) -> CliResult<ServerState> {
        Ok(ServerState::from_bytes(&read_file(&self.path(INDEX_FILE))?)?)
    }
}

/// Either a remote server or an in-process one over the local index file.
enum Endpoint {
    Remote(TcpChannel),
    Local(Box<Server>),
}

impl Endpoint {
    fn open(dep: &Deployment, remote: &RemoteArg, public: &PublicBundle, server_seed: [u8; 32]) -> CliResult<Self> {
        let mut ep = match &remote.server {
            Some(addr) => Endpoint::Remote(TcpChannel::connect(addr.as_str())?),
            None => Endpoint::Local(Box::new(Server::new(dep.state()?, server_seed))),
        };
        ep.with(|ch| hello(ch, &public.header()))?;
        Ok(ep)
    }

    fn with<T>(&mut self, f: impl FnOnce(&mut dyn Channel) -> etse::Result<T>) -> etse::Result<T> {
        match self {
            Endpoint::Remote(ch) => f(ch),
            Endpoint::Local(server) => f(&mut server.connect()),
        }
    }

    fn save(&self, dep: &Deployment) -> CliResult {
        if let Endpoint::Local(server) = self {
            write_atomic(&dep.path(INDEX_FILE), &server.snapshot().to_bytes())?;
        }
        Ok(())
    }
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Keygen { config, out, seed } => cmd_keygen(config.as_deref(), &out, &seed),
        Command::Enroll {
            dir,
            id,
            template,
            synthetic,
            template_dir,
            remote,
            seed,
        } => cmd_enroll(&Deployment { dir }, id, template, synthetic, template_dir, &remote, &seed),
        Command::Identify {
            dir,
            template,
            templates,
            remote,
            seed,
        } => cmd_identify(&Deployment { dir }, &template, templates, &remote, &seed),
        Command::Serve {
            index,
            listen,
            persist,
            seed,
        } => cmd_serve(&index, &listen, persist, &seed),
        Command::Experiment {
            config,
            out,
            log,
            threads,
        } => cmd_experiment(&config, out.as_deref(), log.as_deref(), threads),
        Command::Bench {
            config,
            enrolled,
            queries,
            seed,
        } => crate::bench::run(config.as_deref(), enrolled, queries, seed_of(&seed)?),
        Command::Selftest => crate::selftest::run(),
        Command::Template { action } => cmd_template(action),
    }
}

fn load_params(config: Option<&Path>) -> CliResult<SchemeParams> {
    match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Ok(SchemeParams::from_config(&text)?)
        }
        None => Ok(SchemeParams::default()),
    }
}

fn cmd_keygen(config: Option<&Path>, out: &Path, seed: &SeedArg) -> CliResult {
    let params = load_params(config)?;
    let (public, secret, state) = keygen(&params, seed_of(seed)?)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(PUBLIC_FILE), public.to_bytes())?;
    fs::write(out.join(SECRET_FILE), secret.to_bytes())?;
    fs::write(out.join(PARAMS_FILE), params.to_config())?;
    write_atomic(&out.join(INDEX_FILE), &state.to_bytes())?;
    Registry::new(params.buckets).save(out.join(REGISTRY_FILE))?;
    println!("wrote {}", out.display());
    if !params.group.is_secure() {
        eprintln!("etse: warning: group {} is for testing only", params.group.name());
    }
    Ok(())
}

fn cmd_enroll(
    dep: &Deployment,
    id: Option<String>,
    template: Option<PathBuf>,
    synthetic: Option<usize>,
    template_dir: Option<PathBuf>,
    remote: &RemoteArg,
    seed: &SeedArg,
) -> CliResult {
    let public = dep.public()?;
    let mut registry = dep.registry(public.params.buckets)?;
    let mut master = ChaCha20Rng::from_seed(seed_of(seed)?);
    let server_seed: [u8; 32] = master.random();
    let mut rng = ChaCha20Rng::from_seed(master.random());

    let mut batch: Vec<(String, BinaryTemplate)> = Vec::new();
    match (template, synthetic) {
        (Some(path), None) => {
            let id = id.ok_or_else(|| Failure::Usage("--template needs --id".into()))?;
            batch.push((id, read_template(&path)?));
        }
        (None, Some(n)) => {
            let tdir = template_dir.ok_or_else(|| Failure::Usage("--synthetic needs --template-dir".into()))?;
            fs::create_dir_all(&tdir)?;
            let start = registry.len();
            for i in start..start + n {
                let name = format!("user-{i:06}");
                let b = random_template(public.params.n_bits, &mut rng)?;
                b.write_file(tdir.join(format!("{name}.ftpl")))?;
                batch.push((name, b));
            }
        }
        _ => return Err(Failure::Usage("give either --template with --id, or --synthetic".into())),
    }

    let mut ep = Endpoint::open(dep, remote, &public, server_seed)?;
    let mut result = Ok(());
    for (name, b) in &batch {
        match ep.with(|ch| enroll(name, b, &public, &mut registry, ch, &mut rng)) {
            Ok(u) => println!("enrolled {} {}", u.pseudo_identity, u.identifier),
            Err(e) => {
                result = Err(Failure::Lib(e));
                break;
            }
        }
    }
    // Keep whatever succeeded, even after a failure.
    ep.save(dep)?;
    registry.save(dep.path(REGISTRY_FILE))?;
    result
}

fn cmd_identify(dep: &Deployment, template: &Path, templates: bool, remote: &RemoteArg, seed: &SeedArg) -> CliResult {
    let secret = dep.secret()?;
    let registry = dep.registry(secret.public.params.buckets)?;
    let probe = read_template(template)?;
    let mut ep = Endpoint::open(dep, remote, &secret.public, seed_of(seed)?)?;
    let receiver = Receiver::new(secret);
    let out = ep.with(|ch| {
        identify(
            &probe,
            &receiver,
            &registry,
            ch,
            IdentifyOptions {
                keep_templates: templates,
            },
        )
    })?;
    for c in &out.candidates {
        let mut line = format!(
            "candidate identity={} identifier={} distance={} verified={}",
            c.pseudo_identity.as_deref().unwrap_or("-"),
            c.identifier,
            c.distance,
            if c.verified { "yes" } else { "no" }
        );
        if let Some(t) = &c.template {
            line.push_str(&format!(" template={}", hex::encode(t.as_bytes())));
        }
        println!("{line}");
    }
    println!("matches = {}", out.matches().count());
    Ok(())
}

fn cmd_serve(index: &Path, listen: &str, persist: bool, seed: &SeedArg) -> CliResult {
    let state = ServerState::from_bytes(&read_file(index)?)?;
    let server = Arc::new(Server::new(state, seed_of(seed)?));
    let listener = TcpListener::bind(listen).map_err(|e| Failure::Usage(format!("cannot listen on {listen}: {e}")))?;
    let hook: Option<WriteHook> = persist.then(|| {
        let path = index.to_path_buf();
        let lock = Mutex::new(());
        let hook: WriteHook = Arc::new(move |s: &Server| {
            let _guard = lock.lock().unwrap();
            if let Err(e) = write_atomic(&path, &s.snapshot().to_bytes()) {
                eprintln!("etse: cannot persist index: {}", e.message());
            }
        });
        hook
    });
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    serve(listener, server, hook)?;
    Ok(())
}

fn cmd_experiment(config: &Path, out: Option<&Path>, log: Option<&Path>, threads: Option<usize>) -> CliResult {
    let text = fs::read_to_string(config).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::from_config(&text)?;
    if let Some(t) = threads {
        cfg.threads = t.max(1);
    }
    let (report, records) = run_experiment(&cfg)?;
    match out {
        Some(p) => fs::write(p, report.to_text())?,
        None => print!("{}", report.to_text()),
    }
    if let Some(p) = log {
        let mut csv = String::from(TrialRecord::CSV_HEADER);
        csv.push('\n');
        for r in &records {
            csv.push_str(&r.to_csv());
            csv.push('\n');
        }
        fs::write(p, csv)?;
    }
    Ok(())
}

fn cmd_template(action: TemplateAction) -> CliResult {
    match action {
        TemplateAction::Random { bits, out, seed } => {
            let mut rng = ChaCha20Rng::from_seed(seed_of(&seed)?);
            random_template(bits, &mut rng)?.write_file(out)?;
        }
        TemplateAction::Perturb { input, flip, out, seed } => {
            let mut rng = ChaCha20Rng::from_seed(seed_of(&seed)?);
            let t = read_template(&input)?;
            perturb_bsc(&t, flip, &mut rng)
                .map_err(|e| Failure::Usage(e.to_string()))?
                .write_file(out)?;
        }
    }
    Ok(())
}
