use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safe_oco::environments::EnvConfig;
use safe_oco::harness::{figure_data, run_audit, run_trials, sweep, write_run, Algo, RunOutput};
use safe_oco::Result;

#[derive(Parser)]
#[command(name = "safe-oco", version, about = "Seeded experiments for online optimization under unknown linear constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm for several trials and write its results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algo: Algo,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every listed algorithm at every listed horizon.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        algos: Vec<Algo>,
        #[arg(long = "T-list", value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run OSOCO with all invariant checks; exits nonzero on any failure.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T")]
        horizon: usize,
    },
    /// Aggregate the rounds.csv files under a directory for plotting.
    FigureData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_run(r: &RunOutput) {
    println!(
        "{} T={} trials={} mean_regret={:.6e} max_static_viol={:.6e} -> {}",
        r.algo,
        r.horizon,
        r.trials,
        r.mean_regret,
        r.max_static_viol,
        r.dir.display()
    );
}

fn load(path: &Path) -> Result<EnvConfig> {
    let env = EnvConfig::load(path)?;
    env.validate()?;
    Ok(env)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, algo, horizon, trials, seed, out } => {
            let mut env = load(&config)?;
            if let Some(seed) = seed {
                env.seed = seed;
            }
            let results = run_trials(&env, algo, horizon, trials)?;
            print_run(&write_run(&out, &env, algo, horizon, &results)?);
        }
        Command::Sweep { config, algos, horizons, trials, out } => {
            let env = load(&config)?;
            for r in sweep(&env, &algos, &horizons, trials, &out)? {
                print_run(&r);
            }
        }
        Command::Audit { config, horizon } => {
            for line in run_audit(&load(&config)?, horizon)? {
                println!("{line}");
            }
        }
        Command::FigureData { input, out } => {
            for path in figure_data(&input, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
