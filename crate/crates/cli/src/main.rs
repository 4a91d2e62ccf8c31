use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use paraxial_cli::batch::{cmd_batch, RunFlags};
use paraxial_cli::config::{load_config, LoadedConfig};
use paraxial_cli::error::{EXIT_CHECK_FAILED, EXIT_OK};
use paraxial_cli::verify::{run_verify, CHECK_NAMES};
use paraxial_cli::{bpm, compare, trace, CliError, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "paraxial",
    version,
    about = "Spin-orbit transport of paraxial beams: geometric traces and a wave oracle"
)]
struct Cli {
    /// Output directory (default: `output.dir` of the scenario, or `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides the one in the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Drop the spin-orbit terms from the ray equations.
    #[arg(long, global = true)]
    zeroth_order: bool,
    /// Write field snapshots at the end of `bpm` runs.
    #[arg(long, global = true)]
    snapshots: bool,
    /// Force p_z = n0 in the ray equations.
    #[arg(long, global = true)]
    strict_paraxial: bool,
    /// Test hook: perturb the named verify check.
    #[arg(long, global = true, hide = true)]
    inject_fault: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in residual checks.
    Verify,
    /// Trace rays for sigma = -1, 0, +1.
    Trace { config: PathBuf },
    /// Run the paired wave-oracle simulation.
    Bpm { config: PathBuf },
    /// Join a trace summary with a probe series.
    Compare { summary: PathBuf, probes: PathBuf },
    /// Run trace, bpm and compare for every scenario in a directory.
    Batch { dir: PathBuf },
}

fn print<T: Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("error: cannot serialize report: {e}"),
    }
}

fn out_dir(cli: &Cli, loaded: &LoadedConfig) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.config.output.dir))
}

fn run(cli: &Cli) -> Result<i32> {
    let flags = RunFlags {
        seed: cli.seed,
        zeroth_order: cli.zeroth_order,
        strict_paraxial: cli.strict_paraxial,
        snapshots: cli.snapshots,
    };
    match &cli.command {
        Command::Verify => {
            if let Some(name) = &cli.inject_fault {
                if !CHECK_NAMES.contains(&name.as_str()) {
                    return Err(CliError::Validation(format!(
                        "unknown check {name:?}; expected one of {}",
                        CHECK_NAMES.join(", ")
                    )));
                }
            }
            let report = run_verify(cli.seed.unwrap_or(0), cli.inject_fault.as_deref());
            print(&report);
            Ok(if report.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::Trace { config } => {
            let loaded = load_config(config)?;
            let seed = cli.seed.unwrap_or(loaded.config.seed);
            let summary = trace::cmd_trace(
                &loaded,
                &out_dir(cli, &loaded),
                seed,
                flags.zeroth_order,
                flags.strict_paraxial,
            )?;
            print(&summary);
            Ok(EXIT_OK)
        }
        Command::Bpm { config } => {
            let loaded = load_config(config)?;
            let seed = cli.seed.unwrap_or(loaded.config.seed);
            let summary = bpm::cmd_bpm(&loaded, &out_dir(cli, &loaded), seed, flags.snapshots)?;
            print(&summary);
            Ok(EXIT_OK)
        }
        Command::Compare { summary, probes } => {
            let dir = cli
                .out
                .clone()
                .unwrap_or_else(|| summary.parent().map(Path::to_path_buf).unwrap_or_default());
            let report = compare::cmd_compare(summary, probes, Some(&dir))?;
            print(&report);
            Ok(if report.pass {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::Batch { dir } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let summary = cmd_batch(dir, &out, flags)?;
            print(&summary);
            Ok(summary.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
