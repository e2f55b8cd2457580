use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kzlaser_cli::experiment::calibrate;
use kzlaser_cli::{load_config, run_experiment, CliResult};
use kzlaser_core::equilibria::flux_budget;

#[derive(Debug, Parser)]
#[command(
    name = "kzlaser",
    version,
    about = "Carrier kinetics and pumping experiments for a semiconductor laser"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `run.output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary fluxes for injection at omega_0 between omega_L and omega_R.
    Budget {
        #[arg(long = "omega-l", allow_negative_numbers = true)]
        omega_l: f64,
        #[arg(long = "omega-0", allow_negative_numbers = true)]
        omega_0: f64,
        #[arg(long = "omega-r", allow_negative_numbers = true)]
        omega_r: f64,
        #[arg(long, allow_negative_numbers = true)]
        q0: f64,
    },
    /// Calibrate the collision strength on the config's grid and parameters.
    Calibrate {
        #[arg(long = "target-fs", default_value_t = 100.0)]
        target_fs: f64,
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Run { config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.run.output_dir = out;
            }
            let dir = cfg.run.output_dir.clone();
            let summary = run_experiment(&cfg, &dir)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
        }
        Command::Budget {
            omega_l,
            omega_0,
            omega_r,
            q0,
        } => {
            let b = flux_budget(omega_l, omega_0, omega_r, q0)?;
            println!("{}", serde_json::to_string_pretty(&b).expect("budget serializes"));
        }
        Command::Calibrate { target_fs, config } => {
            let mut cfg = load_config(&config)?;
            cfg.calibration.target_fs = target_fs;
            cfg.validate()?;
            let cal = calibrate(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&cal).expect("calibration serializes")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KZLASER_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
