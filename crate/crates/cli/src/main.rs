use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use itr_cli::commands::{self, FitRequest};
use itr_cli::{config, CliError, CliResult, Exit};
use itr_core::{Family, Method, Tuning};

/// Individualized treatment rules for count and binary outcomes.
#[derive(Parser)]
#[command(name = "itr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation config and write table.csv and table.json.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides the config's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a rule to CSV data and write a JSON model report.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        outcome: String,
        #[arg(long)]
        treatment: String,
        /// Baseline covariates, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        baseline: Vec<String>,
        /// Candidate tailoring variables (a subset of the baseline covariates).
        #[arg(long, value_delimiter = ',')]
        blip: Vec<String>,
        /// Treatment-model covariates; defaults to the baseline covariates.
        #[arg(long, value_delimiter = ',')]
        propensity: Vec<String>,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value = "PDR")]
        method: Method,
        /// qic, cv[:k], ipw_value, fixed:<λ> or rate:<e>.
        #[arg(long, default_value = "qic")]
        tuning: Tuning,
        /// Lower outcomes are better.
        #[arg(long)]
        minimize: bool,
        /// Seed for cross-validation folds; `ITR_SEED` overrides it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Apply a model report to CSV data: row, blip, recommendation.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Calibrate the high-dimensional generator to its anchor values.
    Calibrate {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 30)]
        p: usize,
        #[arg(long, default_value_t = 100_000)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Write one simulated training replicate as CSV.
    Export {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn seed_from_env(default: u64) -> CliResult<u64> {
    match std::env::var(config::SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("{}: expected an unsigned integer, got '{s}'", config::SEED_ENV))),
        Err(_) => Ok(default),
    }
}

fn run(cli: Cli) -> CliResult<Exit> {
    match cli.command {
        Command::Simulate { config, out } => {
            let (exit, run) = commands::simulate(&config, out.as_deref())?;
            for r in &run.rows {
                println!(
                    "{:<10} ER {:.3} value {:.3} FN {:.3} FP {:.3} MAE {:.3} MSE {:.3} failed {}",
                    r.estimator, r.er, r.value, r.fn_rate, r.fp_rate, r.mae, r.mse, r.n_failed
                );
            }
            Ok(exit)
        }
        Command::Fit {
            data,
            outcome,
            treatment,
            baseline,
            blip,
            propensity,
            family,
            method,
            tuning,
            minimize,
            seed,
            output,
        } => {
            let req = FitRequest {
                data_path: data,
                outcome,
                treatment,
                baseline,
                blip,
                propensity,
                family,
                method,
                tuning,
                minimize,
                seed: seed_from_env(seed)?,
            };
            let fitted = commands::fit(&req)?;
            commands::write_report(&fitted.report, output.as_deref())?;
            Ok(Exit::Ok)
        }
        Command::Predict { model, data, output } => {
            let report = commands::load_report(&model)?;
            let preds = commands::predict(&report, &data)?;
            commands::write_predictions(&preds, output.as_deref())?;
            Ok(Exit::Ok)
        }
        Command::Calibrate { family, p, size, seed } => {
            print!("{}", commands::calibrate(family, p, size, seed)?);
            Ok(Exit::Ok)
        }
        Command::Export { config, rep, output } => {
            commands::export(&config, rep, output.as_deref())?;
            Ok(Exit::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
