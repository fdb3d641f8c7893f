use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use floodcast_cli::{execute, Command, Outcome, Overrides, RunConfig};
use floodcast_core::WeightFunction;

/// Flood forecasting from river sensor data.
///
/// Exit status: 0 on success, 2 when a forecast or report contains an alarm,
/// 1 on any error.
#[derive(Debug, Parser)]
#[command(name = "floodcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Robust regression of level on the parameters of a readings CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Replay readings through the predictor and write predictions, errors,
    /// metrics and plots.
    Forecast {
        #[arg(long)]
        input: PathBuf,
        /// Past readings loaded before the first prediction.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a network scenario and write its trace, energy ledger and alarms.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Run several seeds in parallel, one output directory each.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute metrics and plots from a predictions CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    flood_line: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated sampling intervals in minutes.
    #[arg(long, value_delimiter = ',')]
    time_set: Option<Vec<f64>>,
    #[arg(long)]
    action_time: Option<f64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, value_parser = parse_weight_fn)]
    weight_fn: Option<WeightFunction>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    reliability_period: Option<f64>,
}

fn parse_weight_fn(s: &str) -> Result<WeightFunction, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl Common {
    fn into_config(self, command: Command) -> RunConfig {
        RunConfig {
            command,
            out_dir: self.out_dir,
            seed: self.seed,
            overrides: Overrides {
                flood_line: self.flood_line,
                threshold: self.threshold,
                time_set: self.time_set,
                action_time: self.action_time,
                capacity: self.capacity,
                weight_fn: self.weight_fn,
                max_iter: self.max_iter,
                reliability_period: self.reliability_period,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match cli.command {
        Cmd::Fit { input, common } => common.into_config(Command::Fit { input }),
        Cmd::Forecast { input, history, common } => common.into_config(Command::Forecast { input, history }),
        Cmd::Simulate { scenario, seeds, common } => common.into_config(Command::Simulate { scenario, seeds }),
        Cmd::Report { input, common } => common.into_config(Command::Report { input }),
    };
    match execute(&config) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Alarm) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
