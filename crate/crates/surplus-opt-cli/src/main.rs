//! Experiment runner for the surplus-consensus optimization protocol.
//!
//! `surplus-opt <run|verify|check|compare> --config cfg.json [--out DIR]
//! [--seed N] [--kmax N]`. The output root falls back to the config's `out`
//! field, then the `SURPLUS_OPT_OUT` environment variable, then `./out`.
//! Exit codes: 0 success, 1 validation, 2 divergence, 3 engine
//! disagreement, 4 i/o.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use surplus_opt_cli::config::{parse_config, CliError, Mode};
use surplus_opt_cli::runner;

#[derive(Parser)]
#[command(
    name = "surplus-opt",
    version,
    about = "Distributed second-order optimization over unbalanced directed networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a configured run and write trajectory/report artifacts.
    Run(CommonArgs),
    /// Run with an independent second engine in lockstep; disagreement fails.
    Verify(CommonArgs),
    /// Validate the config and print spectral quantities without stepping.
    Check(CommonArgs),
    /// Run surplus on and off from the same start and summarize side by side.
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON config document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and SURPLUS_OPT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's K_max.
    #[arg(long)]
    kmax: Option<u64>,
}

fn drive(mode: Mode, args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg = parse_config(&args.config)?;
    cfg.mode = mode;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(kmax) = args.kmax {
        cfg.k_max = kmax;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os("SURPLUS_OPT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());
    runner::execute(&cfg, &out)
}

fn main() {
    let cli = Cli::parse();
    let (mode, args) = match &cli.cmd {
        Cmd::Run(a) => (Mode::Run, a),
        Cmd::Verify(a) => (Mode::Verify, a),
        Cmd::Check(a) => (Mode::Check, a),
        Cmd::Compare(a) => (Mode::Compare, a),
    };
    if let Err(e) = drive(mode, args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
