use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sphrtf_cli::commands::{self, Outcome, PrepareStatus};
use sphrtf_cli::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "sphrtf", version, about = "HRTF personalization pipeline")]
struct Cli {
    /// TOML configuration file; SPHRTF_<SECTION>_<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for subject- and fold-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seeds synthesis and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (dataset root for `synth`, work directory otherwise).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rigid-sphere population.
    Synth,
    /// Extract SH targets and ear features for every subject.
    Prepare,
    /// Train one model pair on all prepared subjects.
    Train,
    /// Leave-one-out cross-validation, then evaluation.
    Loocv,
    /// Score saved cross-validation predictions.
    Eval,
}

fn report(outcome: &Outcome) -> ExitCode {
    for (id, msg) in &outcome.failures {
        eprintln!("failed: {id}: {msg}");
    }
    if outcome.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let work = cli.out.clone().unwrap_or_else(|| PathBuf::from("work"));
    let outcome = match cli.command {
        Command::Synth => {
            let out = cli.out.unwrap_or_else(|| cfg.dataset.root.clone());
            let o = commands::synth(&cfg, &out, cli.jobs)?;
            println!("wrote {} subjects to {}", cfg.synth.subjects, out.display());
            o
        }
        Command::Prepare => {
            let (o, done) = commands::prepare(&cfg, &work, cli.jobs)?;
            for (id, s) in done {
                let what = match s {
                    PrepareStatus::Computed => "prepared",
                    PrepareStatus::UpToDate => "up to date",
                };
                println!("{id}: {what}");
            }
            o
        }
        Command::Train => commands::train(&cfg, &work)?,
        Command::Loocv => {
            let o = commands::loocv(&cfg, &work, cli.jobs)?;
            print_overall(&work);
            o
        }
        Command::Eval => {
            let o = commands::eval(&cfg, &work, cli.jobs)?;
            print_overall(&work);
            o
        }
    };
    Ok(report(&outcome))
}

fn print_overall(work: &std::path::Path) {
    if let Ok(text) = std::fs::read_to_string(work.join(commands::LOOCV).join(commands::OVERALL)) {
        print!("{text}");
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
