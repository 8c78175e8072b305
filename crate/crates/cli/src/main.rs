use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pdifmp_cli::{cmd_ergodic, cmd_infer, cmd_simulate, cmd_summarize, resolve_config, InferStatus, PRESETS};

#[derive(Parser)]
#[command(
    name = "pdifmp",
    version,
    about = "Simulate and fit piecewise diffusion Markov processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured truth and write path.csv and jumps.csv.
    Simulate(RunArgs),
    /// Calibrate distance weights and run SMC-ABC.
    Infer(RunArgs),
    /// Compare time-average and ensemble densities.
    Ergodic(RunArgs),
    /// Summary statistics of a path file.
    Summarize(SummarizeArgs),
    /// List built-in presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    path: PathBuf,
    /// Jump times; makes the slope statistic part of the summary.
    #[arg(long)]
    jumps: Option<PathBuf>,
    /// Jump count when no jump file is given (default: regime changes).
    #[arg(long)]
    n_jumps: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let resolve = |a: &RunArgs| resolve_config(a.config.as_deref(), a.preset.as_deref(), a.seed, a.out.clone());
    match cli.command {
        Command::Simulate(a) => {
            let cfg = resolve(&a)?;
            let out = cmd_simulate(&cfg)?;
            eprintln!(
                "wrote {} points, {} jumps to {}",
                out.n_points,
                out.n_jumps,
                cfg.output.display()
            );
        }
        Command::Infer(a) => {
            let cfg = resolve(&a)?;
            let out = cmd_infer(&cfg)?;
            if out.status == InferStatus::BudgetExhausted {
                eprintln!(
                    "budget exhausted before the first generation completed; partial output in {}",
                    cfg.output.display()
                );
                return Ok(ExitCode::from(3));
            }
            let o = out.outcome.expect("complete run has an outcome");
            eprintln!(
                "{} generations, {} simulations, stopped on {:?}; results in {}",
                o.history.len(),
                o.population.budget_used,
                o.stop_reason,
                cfg.output.display()
            );
        }
        Command::Ergodic(a) => {
            let cfg = resolve(&a)?;
            let r = cmd_ergodic(&cfg)?;
            eprintln!("l1 gap {:.4}; results in {}", r.l1_gap, cfg.output.display());
        }
        Command::Summarize(a) => {
            cmd_summarize(&a.path, a.jumps.as_deref(), a.n_jumps, a.step, &a.out)?;
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
