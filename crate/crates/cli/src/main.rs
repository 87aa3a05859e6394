//! `etse`: key generation, enrolment, identification, a standalone server,
//! experiments and benchmarks over the encrypted biometric index.

mod bench;
mod commands;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "etse", version, about = "Encrypted error-tolerant biometric index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeedArg {
    /// 64 hex digits; makes the run reproducible.
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct RemoteArg {
    /// Talk to a running `etse serve` instead of the local index file.
    #[arg(long, value_name = "HOST:PORT")]
    server: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate keys, hash functions and an empty padded index.
    Keygen {
        /// Parameter file of `key = value` lines.
        #[arg(long, env = "ETSE_CONFIG")]
        config: Option<PathBuf>,
        /// Directory to write the deployment into.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Enrol one template, or a batch of synthetic ones.
    Enroll {
        #[arg(long)]
        dir: PathBuf,
        /// Pseudo-identity for `--template`.
        #[arg(long, requires = "template")]
        id: Option<String>,
        #[arg(long, conflicts_with = "synthetic")]
        template: Option<PathBuf>,
        /// Number of random templates to enrol.
        #[arg(long, requires = "template_dir")]
        synthetic: Option<usize>,
        /// Where synthetic templates are written.
        #[arg(long)]
        template_dir: Option<PathBuf>,
        #[command(flatten)]
        remote: RemoteArg,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Look up a probe template and verify the candidates.
    Identify {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Also print each candidate's decrypted reference.
        #[arg(long)]
        templates: bool,
        #[command(flatten)]
        remote: RemoteArg,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Serve an index file over TCP.
    Serve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Rewrite the index file after every change.
        #[arg(long)]
        persist: bool,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run a statistics experiment described by a config file.
    Experiment {
        #[arg(long, env = "ETSE_CONFIG")]
        config: PathBuf,
        /// Report file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-query CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides `threads` from the config.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Time each phase of a retrieval.
    Bench {
        #[arg(long, env = "ETSE_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        enrolled: usize,
        #[arg(long, default_value_t = 20)]
        queries: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run the built-in invariant checks.
    Selftest,
    /// Create or perturb template files.
    Template {
        #[command(subcommand)]
        action: TemplateAction,
    },
}

#[derive(Subcommand)]
enum TemplateAction {
    /// A uniformly random template.
    Random {
        #[arg(long, default_value_t = 256)]
        bits: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Flip each bit of a template independently.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        flip: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("etse: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
