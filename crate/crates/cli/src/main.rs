//! `stepped` - batch pipelines for gradient-constrained minimizers and
//! random stepped surfaces.
//!
//! Exit codes: 0 success, 1 configuration or input errors, 2 inadmissible
//! boundary data, 3 iteration caps hit before tolerance.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod config;
mod pipeline;

use config::RawConfig;
use pipeline::RunError;

#[derive(Parser)]
#[command(name = "stepped", version, about = "gradient-constrained minimizers and random stepped surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the constrained functional on the configured domain.
    Solve(CommonArgs),
    /// Evaluate the lower/upper admissible extensions of the boundary data.
    Obstacles(CommonArgs),
    /// Run the tiling sampler and emit mean heights plus the rescaled field.
    Sample(CommonArgs),
    /// Compare two emitted fields (same nodes, or interpolable via meshes).
    Compare(CommonArgs),
    /// Regularity diagnostics of an emitted field.
    Diagnose(CommonArgs),
    /// Evaluate a tension model (or a penalized stage) at explicit points.
    TensionEval(CommonArgs),
    /// Exactly count tilings of a small region.
    Enumerate(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run-configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to [run] out, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampler seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value` config overrides, highest precedence.
    #[arg(long = "override", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

fn load_config(args: &CommonArgs) -> Result<(RawConfig, PathBuf), RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RawConfig::parse(&text)?;
    for o in &args.overrides {
        cfg.set_override(o)?;
    }
    let out = match &args.out {
        Some(p) => p.clone(),
        None => PathBuf::from(cfg.get_str("run", "out", "out")),
    };
    Ok((cfg, out))
}

fn dispatch(cmd: &Command) -> Result<(), RunError> {
    let (args, runner): (&CommonArgs, fn(&RawConfig, &std::path::Path, Option<u64>) -> Result<(), RunError>) =
        match cmd {
            Command::Solve(a) => (a, |c, o, s| pipeline::run_solve(c, o, s)),
            Command::Obstacles(a) => (a, |c, o, _| pipeline::run_obstacles(c, o)),
            Command::Sample(a) => (a, pipeline::run_sample),
            Command::Compare(a) => (a, |c, o, _| pipeline::run_compare(c, o)),
            Command::Diagnose(a) => (a, |c, o, _| pipeline::run_diagnose(c, o)),
            Command::TensionEval(a) => (a, |c, o, _| pipeline::run_tension_eval(c, o)),
            Command::Enumerate(a) => (a, |c, o, _| pipeline::run_enumerate(c, o)),
        };
    let (cfg, out) = load_config(args)?;
    runner(&cfg, &out, args.seed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(_) => ExitCode::from(1),
                RunError::Inadmissible(_) => ExitCode::from(2),
                RunError::NonConvergence(_) => ExitCode::from(3),
            }
        }
    }
}
