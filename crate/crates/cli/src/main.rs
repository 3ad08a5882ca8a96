//! `tdlab <scenario> --config <path> [--out <dir>] [--deterministic]`

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use tdlab::scenario::{self, ScenarioConfig, ScenarioName, WORKERS_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "tdlab",
    version,
    about = "Run a transport-density experiment and write its artifacts",
    after_help = concat!(
        "Scenarios: project, symmetrize, density, beckmann, counterexample, estimate, approxstudy.\n",
        "The worker count can be overridden with the TDLAB_WORKERS environment variable."
    )
)]
struct Cli {
    /// Experiment to run.
    scenario: ScenarioName,
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`, then `out/<scenario>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serial, order-fixed accumulation; requires a seed in the config.
    #[arg(long)]
    deterministic: bool,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = ScenarioConfig::load(&cli.config)?;
    cfg.deterministic |= cli.deterministic;
    let out = cli
        .out
        .or_else(|| cfg.output.as_ref().map(|o| cfg.base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out").join(cli.scenario.as_str()));
    let outcome =
        scenario::run(cli.scenario, &cfg, &out).with_context(|| format!("scenario `{}` failed", cli.scenario))?;
    println!(
        "{}: {} artifacts in {} ({:.2} s)",
        cli.scenario,
        outcome.manifest.artifacts.len(),
        outcome.dir.display(),
        outcome.seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if std::env::var_os(WORKERS_ENV).is_some() {
                eprintln!("note: {WORKERS_ENV} is set");
            }
            ExitCode::FAILURE
        }
    }
}
