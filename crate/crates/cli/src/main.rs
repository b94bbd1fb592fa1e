use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photonfb_cli::{cmd_ensemble, cmd_feasibility, cmd_qfunc, cmd_simulate, Overrides};

/// Feedback-stabilized photon-number measurement: trajectories, ensembles,
/// Q-functions and cavity-QED feasibility.
///
/// Exit codes: 0 success, 2 configuration or I/O error, 3 invalidated
/// trajectory. Ensemble worker count: PHOTONFB_WORKERS (default: all cores).
#[derive(Parser)]
#[command(name = "photonfb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write trajectory.csv, summaries and Q snapshots.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the scenario's ensemble (or kappa sweep).
    Ensemble {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Measurement strength, M/kappa and the strong-coupling figure from [qed].
    Feasibility {
        config: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Q-function grid of vacuum, number:<m> or coherent:<re>[,<im>].
    Qfunc {
        #[arg(long)]
        state: String,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
        /// Also report the distance from this target number state.
        #[arg(long)]
        n_star: Option<usize>,
        #[arg(long, short, default_value = "qfunc.txt")]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, output } => {
            cmd_simulate(&config, &Overrides { seed, output_dir: output, n_traj: None })
        }
        Command::Ensemble { config, seed, n_traj, output } => {
            cmd_ensemble(&config, &Overrides { seed, output_dir: output, n_traj })
        }
        Command::Feasibility { config, output } => {
            cmd_feasibility(&config, &Overrides { output_dir: output, ..Default::default() })
        }
        Command::Qfunc { state, n_max, points, n_star, output } => cmd_qfunc(&state, n_max, points, n_star, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
