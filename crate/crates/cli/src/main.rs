//! `cemwave` — multiscale elastic wave simulations from a TOML config.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cemwave_cli::config::{Config, Mode};
use cemwave_cli::runner;

#[derive(Parser)]
#[command(name = "cemwave", version, about = "Anisotropic elastic wave simulation with a multiscale coarse solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation or convergence study described by a config file.
    Run {
        /// TOML configuration (a previously written manifest.toml works).
        #[arg(long)]
        config: PathBuf,
        /// Override the run mode from the config file.
        #[arg(long)]
        mode: Option<Mode>,
        /// Override a config value by dotted path, e.g. `time.tau=2e-4`.
        /// May be repeated.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the resolved configuration and exit without running.
        #[arg(long)]
        dry_run: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            mode,
            overrides,
            dry_run,
        } => {
            let mut overrides = overrides;
            if let Some(mode) = mode {
                overrides.push(format!("run.mode=\"{mode}\""));
            }
            let config = match Config::load(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("configuration error: {e:#}");
                    return ExitCode::from(1);
                }
            };
            if dry_run {
                print!("{}", config.to_toml());
                return ExitCode::SUCCESS;
            }
            match runner::run(&config) {
                Ok(summary) => {
                    println!(
                        "{} run complete: {} steps, {} fine DOFs{}",
                        summary.mode,
                        summary.steps,
                        summary.fine_dofs,
                        summary
                            .coarse_dim
                            .map(|d| format!(", {d} coarse DOFs"))
                            .unwrap_or_default()
                    );
                    if let Some(e) = summary.final_energy {
                        println!("final discrete energy: {e:.6e}");
                    }
                    if summary.mode == Mode::Study {
                        if let Ok(text) =
                            std::fs::read_to_string(summary.output_dir.join("study.txt"))
                        {
                            print!("{text}");
                        }
                    }
                    for f in &summary.files {
                        println!("wrote {}", summary.output_dir.join(f).display());
                    }
                    println!("wrote {}", summary.output_dir.join("manifest.toml").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
