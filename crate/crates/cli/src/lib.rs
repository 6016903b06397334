//! The `lbn` command line: build models, estimate and execute queries,
//! expand workloads and run benchmarks.
//!
//! Every command prints machine-readable JSON on stdout. A failure prints a
//! single `{"error": ...}` line on stderr and exits non-zero.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::{cmd_bench, cmd_build, cmd_estimate, cmd_oracle, cmd_workload_expand};
pub use config::{ConfigFile, Flags, Method, RunConfig};

/// Exit status for errors raised while running a command.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for malformed arguments.
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "lbn", version, about = "Selectivity estimation with linked tree Bayesian networks")]
pub struct Cli {
    /// TOML file with defaults for any flag; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub flags: Flags,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Learn the per-relation networks and write a model file.
    Build,
    /// Estimate the selectivity of a query (SQL or JSON file, `-` for stdin).
    Estimate { query: PathBuf },
    /// Execute a query exactly.
    Oracle { query: PathBuf },
    /// Workload files.
    #[command(subcommand)]
    Workload(WorkloadCommand),
    /// Expand a workload, run every method against the oracle, write reports.
    Bench { workload: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum WorkloadCommand {
    /// Print every expanded query as one JSON line.
    Expand { workload: PathBuf },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: String,
    kind: &'a str,
}

fn error_line(kind: &str, message: String) -> String {
    serde_json::to_string(&ErrorLine { error: message, kind }).expect("strings serialize")
}

fn print_json<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

/// Merges the config file and the flags of a parsed invocation.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    RunConfig::resolve(file, &cli.flags)
}

/// Runs one parsed invocation, writing its output to `out`.
pub fn execute(cli: &Cli, cfg: &RunConfig, out: &mut impl Write) -> Result<()> {
    log::debug!("{cfg:?}");
    match &cli.command {
        Command::Build => print_json(out, &cmd_build(cfg)?),
        Command::Estimate { query } => {
            for estimate in cmd_estimate(cfg, query)? {
                print_json(out, &estimate)?;
            }
            Ok(())
        }
        Command::Oracle { query } => print_json(out, &cmd_oracle(cfg, query)?),
        Command::Workload(WorkloadCommand::Expand { workload }) => {
            let queries = cmd_workload_expand(cfg, workload)?;
            if cfg.out.is_none() {
                for q in &queries {
                    writeln!(out, "{}", q.to_json())?;
                }
            } else {
                print_json(out, &serde_json::json!({ "queries": queries.len() }))?;
            }
            Ok(())
        }
        Command::Bench { workload } => print_json(out, &cmd_bench(cfg, workload)?),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("LBN_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or(&message)
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("{}", error_line("usage", first));
            return EXIT_USAGE;
        }
    };
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{}", error_line("usage", format!("{e:#}").replace('\n', " ")));
            return EXIT_USAGE;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &cfg, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("{}", error_line("command", message));
            EXIT_FAILURE
        }
    }
}
