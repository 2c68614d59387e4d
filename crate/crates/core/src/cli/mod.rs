//! `segpart eig|partition|sweep|verify --config <path> [-v]`.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration error, 3 runtime
//! or solver error. `SEGPART_THREADS` caps the worker pool.

mod commands;
mod config;
mod verify;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_eig, cmd_partition, cmd_sweep};
pub use config::{
    DomainConfig, GridConfig, OutputConfig, ProblemConfig, RunConfig, ToleranceConfig, VerifyConfig, SCHEMA_VERSION,
};
pub use verify::{cmd_verify, CheckOutcome, CHECKS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(e: impl Display) -> Self {
        CliError { code: EXIT_CONFIG, message: e.to_string() }
    }

    pub fn runtime(e: impl Display) -> Self {
        CliError { code: EXIT_RUNTIME, message: e.to_string() }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "segpart", version, about = "Distance-constrained spectral partitions on gridded domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// First Dirichlet eigenpair of the configured domain.
    Eig(CommonArgs),
    /// Optimized k-partition at a fixed separation r.
    Partition(CommonArgs),
    /// Optimized partitions over problem.r_values.
    Sweep(CommonArgs),
    /// Named numerical checks from the `checks` list.
    Verify(CommonArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Eig(a) | Command::Partition(a) | Command::Sweep(a) | Command::Verify(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Eig(_) => "eig",
            Command::Partition(_) => "partition",
            Command::Sweep(_) => "sweep",
            Command::Verify(_) => "verify",
        }
    }
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var("SEGPART_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(format!("SEGPART_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Runs one command. Relative output directories resolve against the
/// directory holding the config file; timestamps go to `run.log` only.
pub fn run(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let cfg = RunConfig::load(&args.config).map_err(CliError::config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let out = cfg.output_dir(base);
    std::fs::create_dir_all(&out).map_err(|e| CliError::config(format!("cannot create {}: {e}", out.display())))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(CliError::runtime)?;
    let started = unix_seconds();
    let result = pool.install(|| match command {
        Command::Eig(_) => cmd_eig(&cfg, &out),
        Command::Partition(_) => cmd_partition(&cfg, &out),
        Command::Sweep(_) => cmd_sweep(&cfg, &out),
        Command::Verify(_) => cmd_verify(&cfg, &out),
    });
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("exit {}: {}", e.code, e.message),
    };
    let log = format!(
        "command={}\nconfig={}\nstarted_unix={started}\nfinished_unix={}\nstatus={status}\n",
        command.name(),
        args.config.display(),
        unix_seconds()
    );
    // The log is informational; failing to write it does not fail the run.
    let _ = std::fs::write(out.join("run.log"), log);
    result
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = match cli.command.args().verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
