use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use battery_mpcrl::mpc::Theta;
use battery_mpcrl::prices::{load_csv, DEFAULT_SELL_RATIO};
use battery_mpcrl::train::{simulate, train, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "battery-mpcrl", version, about = "MPC-based RL for a residential battery fleet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn θ over monthly batches and write run artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        months: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a fixed θ without learning.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        months: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Price file utilities.
    Prices {
        #[command(subcommand)]
        command: PricesCommand,
    },
}

#[derive(Subcommand)]
enum PricesCommand {
    /// Check an `hour_index,buy_price` file and print a summary.
    Validate {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SELL_RATIO)]
        sell_ratio: f64,
    },
}

fn load_config(
    path: &Path,
    months: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(m) = months {
        cfg.months = m;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(label: &str, out: &battery_mpcrl::train::RunOutput) {
    let m = &out.metrics.months;
    if let (Some(first), Some(last)) = (m.first(), m.last()) {
        println!(
            "{label}: {} months, J first = {:.4}, J last = {:.4}, degenerate samples = {}",
            m.len(),
            first.j_discounted,
            last.j_discounted,
            m.iter().map(|r| r.samples_degenerate).sum::<usize>()
        );
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Train { config, months, seed, out } => {
            let cfg = load_config(&config, months, seed, out)?;
            let result = train(&cfg, config.parent())?;
            print_summary("train", &result);
        }
        Command::Simulate { config, theta, months, seed, out } => {
            let cfg = load_config(&config, months, seed, out)?;
            let text = std::fs::read_to_string(&theta).map_err(|e| format!("{}: {e}", theta.display()))?;
            let theta: Theta = serde_json::from_str(&text)?;
            let result = simulate(&cfg, &theta, config.parent())?;
            print_summary("simulate", &result);
        }
        Command::Prices { command: PricesCommand::Validate { file, sell_ratio } } => {
            let series = load_csv(&file, sell_ratio)?;
            println!("{}", serde_json::to_string(&series.summary())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
