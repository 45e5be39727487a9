//! `nodalab`: runs the verification studies and writes their reports.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails beyond its
//! error bar, 2 for usage or config errors, 3 for missing upstream
//! artifacts, 4 for computation or i/o errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CommandError;
use config::RunConfig;
use report::{ConsolidateError, StudyReport};

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "NODALAB_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "nodalab",
    version,
    about = "Frequency, doubling-index and nodal-set studies"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set sweep.mesh_h=0.03125`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Seed for the Monte-Carlo oracles (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mesh size (overrides `mesh_h`).
    #[arg(long, global = true)]
    mesh_h: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or solve the configured fields and write their samples.
    Solve,
    /// Frequency profiles with monotonicity, doubling and change-of-center checks.
    Frequency,
    /// Doubling-index maps, bounds and vanishing orders.
    Doubling,
    /// Nodal sets, interior and collar studies, per-cube nodal measure.
    Nodal,
    /// Cube subdivision trees and nodal-measure accounting.
    Divide,
    /// Nodal length across the potential family.
    Sweep,
    /// Merge the stage reports under a directory.
    Report {
        /// Directory holding the stage outputs (defaults to the output directory).
        dir: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("{THREADS_VAR} must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err(format!("{THREADS_VAR} must be positive"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn finish(report: StudyReport) -> ExitCode {
    let fails = report.failures();
    println!(
        "{}: {} records, {} failures",
        report.manifest.command,
        report.records.len(),
        fails.len()
    );
    if fails.is_empty() {
        return ExitCode::SUCCESS;
    }
    for f in fails {
        eprintln!("FAIL {} [{}]: {}", f.lemma, f.subject, f.detail);
    }
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let mut overrides = cli.overrides.clone();
    if let Some(o) = &cli.out {
        overrides.push(format!(
            "output_dir={}",
            toml::Value::String(o.display().to_string())
        ));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(h) = cli.mesh_h {
        overrides.push(format!("mesh_h={h:?}"));
    }
    let cfg = match RunConfig::load(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Solve => commands::cmd_solve(&cfg),
        Command::Frequency => commands::cmd_frequency(&cfg),
        Command::Doubling => commands::cmd_doubling(&cfg),
        Command::Nodal => commands::cmd_nodal(&cfg),
        Command::Divide => commands::cmd_divide(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
        Command::Config => {
            print!("{}", cfg.to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| cfg.output_dir.clone());
            return match report::consolidate(&dir) {
                Ok(c) => {
                    println!(
                        "report: {} records, {} failures",
                        c.records.len(),
                        c.failures
                    );
                    for r in c.registry.iter().filter(|r| r.status == "fail") {
                        eprintln!("FAIL {}: {} failing records", r.id, r.failures);
                    }
                    if c.failures == 0 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(ConsolidateError::Missing(m)) => {
                    eprintln!("dependency error: {m}");
                    ExitCode::from(3)
                }
                Err(ConsolidateError::Corrupt(m)) => {
                    eprintln!("dependency error: corrupt artifact {m}");
                    ExitCode::from(3)
                }
                Err(ConsolidateError::Io(e)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(4)
                }
            };
        }
    };
    match result {
        Ok(rep) => finish(rep),
        Err(CommandError::Lab(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
        Err(CommandError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
    }
}
