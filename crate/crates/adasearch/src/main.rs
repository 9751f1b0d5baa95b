//! Command-line front end: run simulation suites, print the complexity
//! report for a configuration, or dump a raster path as CSV.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adasearch::env::GridSpec;
use adasearch::harness::{run_suite, theory_report, write_outputs, SuiteConfig};
use adasearch::planner::{path_rows, raster_path};

#[derive(Parser)]
#[command(name = "adasearch", about = "Top-k source-seeking simulation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation suite from a JSON config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trials per configuration.
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory for CSV/JSON results.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Print the complexity report for a config's first environment.
    Theory {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the serpentine coverage path for an RxC grid as CSV.
    Path {
        /// Grid dimensions, e.g. 16x16.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 4.0)]
        cell_size: f64,
        #[arg(long, default_value_t = 2.0)]
        altitude: f64,
    },
}

fn load_config(path: &PathBuf) -> Result<SuiteConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    SuiteConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run() -> Result<(), String> {
    match Cli::parse().command {
        Command::Simulate { config, seed, trials, out, parallel } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                if t == 0 {
                    return Err("trials must be >= 1".into());
                }
                cfg.trials = t;
            }
            let results = run_suite(&cfg, parallel).map_err(|e| e.to_string())?;
            write_outputs(&cfg, &results, &out).map_err(|e| e.to_string())?;
            let aborted = results.rows.iter().filter(|r| r.report.aborted).count();
            println!(
                "wrote {} trial rows ({} aborted) to {}",
                results.rows.len(),
                aborted,
                out.display()
            );
            Ok(())
        }
        Command::Theory { config } => {
            let cfg = load_config(&config)?;
            let report = theory_report(&cfg).map_err(|e| e.to_string())?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            println!("{text}");
            Ok(())
        }
        Command::Path { grid, cell_size, altitude } => {
            let (rows, cols) = grid
                .split_once(['x', 'X'])
                .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)))
                .ok_or_else(|| format!("grid must look like 16x16, got {grid}"))?;
            let spec = GridSpec::new(rows, cols, cell_size, altitude).map_err(|e| e.to_string())?;
            let path = raster_path(&spec);
            println!("step,x,y,z,dwell");
            for (step, x, y, z, dwell) in path_rows(&path, None) {
                println!("{step},{x},{y},{z},{dwell}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
