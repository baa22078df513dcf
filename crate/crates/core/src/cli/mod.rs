//! Batch command-line front end.
//!
//! Exit status: 0 on success, 2 for configuration or input errors, 3 when a
//! numeric solver does not converge, 1 for anything else.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "atomscan", version, about = "Tweezer-atom survival modelling and scanning-atom-microscope simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Franck-Condon matrix and column-sum report.
    FcMatrix(Common),
    /// Survival against displacement from the waveguide.
    Survival(Common),
    /// Simulated survival map and tilt estimate.
    Scan(Common),
    /// Decay-length, temperature or tilt fit of an input file.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Input CSV; overrides `fit.input`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Top-level seed; every random stream derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, env = "ATOMSCAN_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Site { source, .. } => exit_code(source),
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_FAILURE,
    }
}

/// Runs one parsed command and returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let (common, input) = match &cli.command {
        Command::FcMatrix(c) | Command::Survival(c) | Command::Scan(c) => (c, None),
        Command::Fit { common, input } => (common, input.clone()),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(std::path::absolute(out).map_err(|source| Error::Io {
            path: out.clone(),
            source,
        })?);
    }
    let out_dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| std::path::absolute("out").unwrap_or_else(|_| PathBuf::from("out")));
    cfg.output_dir = Some(out_dir.clone());
    let input = match input {
        Some(p) => Some(std::path::absolute(&p).map_err(|source| Error::Io { path: p, source })?),
        None => None,
    };
    cfg.resolve()?;
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut files = vec![commands::write_resolved(&cfg, &out_dir)?];
    let produced = pool.install(|| match &cli.command {
        Command::FcMatrix(_) => commands::cmd_fc_matrix(&cfg, &out_dir),
        Command::Survival(_) => commands::cmd_survival(&cfg, &out_dir),
        Command::Scan(_) => commands::cmd_scan(&cfg, &out_dir),
        Command::Fit { .. } => commands::cmd_fit(&cfg, input.as_deref(), &out_dir),
    })?;
    files.extend(produced);
    Ok(files)
}

/// Entry point of the binary: parses arguments, runs, reports, and
/// returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
