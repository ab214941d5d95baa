use std::path::PathBuf;
use std::process::ExitCode;

use aqua_core::experiment::{self, ExperimentConfig};
use aqua_core::Error;
use clap::{Args, Parser, Subcommand};

/// Surface-water change forecasting experiments.
#[derive(Debug, Parser)]
#[command(name = "aqua", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Overwrite existing outputs (gen-data) or restart instead of resuming (train).
    #[arg(long)]
    force: bool,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic dataset and its manifest.
    GenData(Common),
    /// Pretrain and finetune, keeping best and last checkpoints.
    Train(Common),
    /// Score the model and baselines on the TEST split.
    Evaluate(Common),
    /// Channel saliency and climate-subgroup analysis on TEST.
    Explain(Common),
    /// Merge evaluated runs into tables and plots.
    Report(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(c) => {
            let cfg = load(&c)?;
            let m = experiment::gen_data(&cfg, c.force)?;
            println!("wrote {} samples to {}", m.samples.len(), m.root.display());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let s = experiment::train(&cfg, c.force)?;
            if let Some(e) = s.epochs.last() {
                println!("trained {} epochs, final loss {:.6}", e.global_epoch, e.train_loss);
            }
            println!("best checkpoint: {}", s.best.display());
        }
        Command::Evaluate(c) => {
            let cfg = load(&c)?;
            let ev = experiment::evaluate(&cfg)?;
            print!("{}", ev.markdown());
        }
        Command::Explain(c) => {
            let cfg = load(&c)?;
            let ex = experiment::explain(&cfg)?;
            print!("{}", ex.markdown());
        }
        Command::Report(c) => {
            let cfg = load(&c)?;
            let r = experiment::report(&cfg)?;
            println!("merged {} runs into {} rows", r.runs.len(), r.rows);
            for f in &r.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

/// 1 for problems the user can fix (config, inputs, checkpoints), 2 for
/// everything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::CorruptField { .. }
        | Error::Checksum { .. }
        | Error::Checkpoint(_)
        | Error::UnknownRegion(_)
        | Error::MissingBand(_)
        | Error::MissingVariable(_)
        | Error::ClimateCoverage(_) => 1,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
