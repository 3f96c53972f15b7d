//! Command-line campaign runner over the scenario harness.
//!
//! `icc simulate` runs one scenario file or one built-in preset bundle and
//! writes a campaign CSV; `icc presets` lists the bundles. Exit codes: 0 on
//! success, 2 on validation or scenario errors, 3 on I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use icc::harness::{self, Scenario};
use icc::IccError;

#[derive(Parser)]
#[command(
    name = "icc",
    version,
    about = "GaBP receivers for joint uplink data detection and over-the-air computation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign and write its CSV.
    Simulate {
        /// Scenario TOML file.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        scenario: Option<PathBuf>,

        /// Built-in scenario bundle; see `icc presets`.
        #[arg(long)]
        preset: Option<String>,

        /// Output CSV path; defaults to the scenario's output_path.
        #[arg(long)]
        out: Option<PathBuf>,

        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in scenario bundles.
    Presets,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                IccError::Io { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), IccError> {
    match cli.command {
        Command::Presets => {
            for name in harness::PRESET_NAMES {
                let p = harness::preset(name).expect("listed preset exists");
                println!("{name}: {} ({} scenarios)", p.summary, p.scenarios.len());
            }
            Ok(())
        }
        Command::Simulate { scenario, preset, out, threads } => {
            let mut scenarios: Vec<Scenario> = match (&scenario, &preset) {
                (Some(path), None) => vec![Scenario::load(path)?],
                (None, Some(name)) => {
                    harness::preset(name)
                        .ok_or_else(|| {
                            IccError::Scenario(format!(
                                "unknown preset {name:?}; valid names: {}",
                                harness::PRESET_NAMES.join(", ")
                            ))
                        })?
                        .scenarios
                }
                // clap enforces exactly one of the two flags.
                _ => unreachable!("argument parsing guarantees one source"),
            };

            for sc in &mut scenarios {
                sc.apply_seed_override()?;
                sc.validate()?;
            }

            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| IccError::Scenario(format!("thread pool setup failed: {e}")))?;
            }

            let mut rows = Vec::new();
            for sc in &scenarios {
                rows.extend(harness::run_campaign(sc)?);
            }
            rows.sort_by(|a, b| {
                a.snr_db
                    .partial_cmp(&b.snr_db)
                    .expect("validated grids are finite")
                    .then_with(|| a.algorithm.cmp(&b.algorithm))
            });

            let path = out.unwrap_or_else(|| {
                PathBuf::from(&scenarios[0].campaign.output_path)
            });
            harness::write_csv(&rows, &path)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
            Ok(())
        }
    }
}
