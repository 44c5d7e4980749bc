use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ecrl::checkpoint::Checkpoint;
use ecrl::harness::{aggregate, run_experiment_matrix, write_aggregate};
use ecrl::{Config, Error, Trainer, Variant};

/// Evolutionary constrained reinforcement learning.
#[derive(Parser)]
#[command(name = "ecrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single run. Extra `--key value` pairs override the config file.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the run log and checkpoints.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        overrides: Vec<String>,
    },
    /// Train every (variant, seed) pair and write a manifest plus aggregate table.
    Matrix {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/matrix")]
        out: PathBuf,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        overrides: Vec<String>,
    },
    /// Print the entries of a checkpoint file.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, Failure> {
    let mut config = match path {
        Some(p) => Config::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => Config::default(),
    };
    config.apply_overrides(overrides)?;
    Ok(config.validate()?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config, out, overrides } => {
            let config = load_config(config.as_deref(), &overrides)?;
            let variant = config.variant();
            let seed = config.seed;
            let mut trainer = Trainer::new(config)?;
            while !trainer.is_finished() {
                let row = trainer.step_generation()?;
                eprintln!(
                    "gen {:>4} steps {:>7} learner_jr {:>9.3} learner_jc {:.3} lambda {:.4}",
                    row.gen, row.steps, row.learner_jr, row.learner_jc, row.lambda_learner
                );
            }
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let csv = out.join(format!("{}_seed{seed}.csv", variant.file_stem()));
            trainer.log.save_csv(&csv)?;
            trainer.save_checkpoints(&out)?;
            println!("{}", csv.display());
        }
        Command::Matrix {
            config,
            variants,
            seeds,
            out,
            parallel,
            overrides,
        } => {
            let config = load_config(config.as_deref(), &overrides)?;
            let variants = variants
                .iter()
                .map(|v| v.parse::<Variant>())
                .collect::<ecrl::Result<Vec<_>>>()?;
            let entries = run_experiment_matrix(&config, &variants, &seeds, &out, parallel)?;
            let file = std::fs::File::create(out.join("aggregate.csv")).map_err(Error::from)?;
            write_aggregate(std::io::BufWriter::new(file), &aggregate(&entries)?)?;
            for e in &entries {
                println!("{},{},{}", e.variant, e.seed, e.status);
            }
            if entries.iter().any(|e| e.status != "ok") {
                return Err(Failure::Runtime("some runs failed; see manifest.csv".into()));
            }
        }
        Command::Inspect { checkpoint } => {
            let ck = Checkpoint::load(&checkpoint).map_err(|e| Failure::Config(e.to_string()))?;
            print!("{}", ck.describe());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
