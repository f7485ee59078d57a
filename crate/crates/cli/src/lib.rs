//! Command-line front end: reads one structured TOML config, runs a single
//! certification, spectral-type, or time-change job, and writes the reports
//! atomically into an output directory.
//!
//! Exit codes: 0 success (certificate strictly positive / diagnostics
//! within tolerance), 2 a quantitative check failed, 3 invalid
//! configuration or a computation that could not be set up, 4 the
//! certificate hypothesis is violated (degenerate lattice drift).

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

use commands::Ctx;
use output::Formats;

#[derive(Parser)]
#[command(
    name = "koopmourre",
    version,
    about = "Certified commutator estimates and spectral-type reports for uniquely ergodic torus systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify a strict positive commutator constant from Birkhoff averages.
    Certify(RunArgs),
    /// Correlation sequences, Wiener averages, and smoothed densities.
    Spectrum(RunArgs),
    /// Time-change diagnostics: g_L convergence and conjugacy residuals.
    Timechange(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to output.directory in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the sampled-vector residual checks.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// Parse arguments and run one job. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    let (name, args) = match &cli.cmd {
        Cmd::Certify(a) => ("certify", a),
        Cmd::Spectrum(a) => ("spectrum", a),
        Cmd::Timechange(a) => ("timechange", a),
    };
    match execute(name, args) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

fn execute(name: &str, args: &RunArgs) -> Result<i32, String> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read config {}: {e}", args.config.display()))?;
    let mut cfg = config::parse_config(&text)?;
    config::resolve_defaults(&mut cfg);

    let out_dir = match &args.out {
        Some(dir) => dir.clone(),
        None => cfg
            .output
            .as_ref()
            .and_then(|o| o.directory.as_ref())
            .map(PathBuf::from)
            .ok_or("no output directory: pass --out or set output.directory")?,
    };
    let formats = cfg
        .output
        .as_ref()
        .and_then(|o| o.formats.as_deref())
        .map(Formats::from_list)
        .unwrap_or(Formats {
            text: true,
            csv: true,
        });

    let ctx = Ctx {
        cfg,
        out_dir,
        seed: args.seed,
        formats,
    };
    match name {
        "certify" => commands::cmd_certify(&ctx),
        "spectrum" => commands::cmd_spectrum(&ctx),
        "timechange" => commands::cmd_timechange(&ctx),
        _ => unreachable!("subcommand names are fixed"),
    }
}
