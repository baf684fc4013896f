use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use o2o_lab::commands;
use o2o_lab::{ExperimentConfig, LabError, LabResult, Mode};

/// Offline-to-online RL experiments with diffusion-generated replay data.
#[derive(Parser)]
#[command(name = "o2o", version)]
struct Cli {
    /// Flat `key = value` config file; defaults apply to missing keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Restrict to these seeds (repeatable); defaults to the config's seeds.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline datasets.
    GenData,
    /// Pre-train agents on the offline datasets.
    TrainOffline,
    /// Fine-tune pre-trained agents online.
    Finetune {
        /// baseline, cfdg, cfdg_no_guidance or cfdg_no_offline_da.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Aggregate curves of finished runs.
    Report {
        /// Mode directories to aggregate; defaults to every mode of the experiment.
        dirs: Vec<PathBuf>,
    },
    /// Print the effective configuration with documentation.
    Config,
}

fn run(cli: Cli) -> LabResult<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seeds = if cli.seeds.is_empty() {
        cfg.seeds.clone()
    } else {
        cli.seeds.clone()
    };
    match cli.command {
        Command::GenData => {
            for p in commands::gen_data(&cfg, &seeds)? {
                println!("{}", p.display());
            }
        }
        Command::TrainOffline => {
            for p in commands::train_offline(&cfg, &seeds)? {
                println!("{}", p.display());
            }
        }
        Command::Finetune { mode } => {
            let mode = match mode {
                Some(m) => Mode::parse(&m)
                    .ok_or_else(|| LabError::validation("mode", format!("unknown mode `{m}`")))?,
                None => cfg.mode,
            };
            for p in commands::finetune(&cfg, mode, &seeds)? {
                println!("{}", p.display());
            }
        }
        Command::Report { dirs } => {
            let (curves, finals) = commands::report(&cfg, &dirs)?;
            println!("{}\n{}", curves.display(), finals.display());
        }
        Command::Config => print!("{}", cfg.render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
