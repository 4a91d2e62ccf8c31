use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{cmd_compare, CompareReport};
use crate::config::load_config;
use crate::error::{CliError, Result, EXIT_CHECK_FAILED, EXIT_OK};
use crate::output::{ensure_dir, write_json, TOOL, VERSION};
use crate::{bpm, trace};

pub const SUMMARY_FILE: &str = "batch_summary.json";

/// Flags shared by every subcommand that runs a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunFlags {
    /// Overrides the seed in the config.
    pub seed: Option<u64>,
    pub zeroth_order: bool,
    pub strict_paraxial: bool,
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub config: String,
    pub out_dir: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub compare: Option<CompareReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub tool: String,
    pub version: String,
    pub entries: Vec<BatchEntry>,
    pub passed: bool,
}

impl BatchSummary {
    /// Worst exit code over all entries.
    pub fn exit_code(&self) -> i32 {
        self.entries
            .iter()
            .map(|e| e.exit_code)
            .max()
            .unwrap_or(EXIT_OK)
    }
}

/// trace, bpm and compare for one config into `out_dir`.
pub fn run_scenario_files(config: &Path, out_dir: &Path, flags: RunFlags) -> Result<CompareReport> {
    let loaded = load_config(config)?;
    let seed = flags.seed.unwrap_or(loaded.config.seed);
    trace::cmd_trace(
        &loaded,
        out_dir,
        seed,
        flags.zeroth_order,
        flags.strict_paraxial,
    )?;
    bpm::cmd_bpm(&loaded, out_dir, seed, flags.snapshots)?;
    cmd_compare(
        &out_dir.join(trace::SUMMARY_FILE),
        &out_dir.join(bpm::PROBES_FILE),
        Some(out_dir),
    )
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Validation(format!(
            "no *.toml scenarios in {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Every `*.toml` in `dir`, in parallel, each into `out/<file stem>/`.
pub fn cmd_batch(dir: &Path, out: &Path, flags: RunFlags) -> Result<BatchSummary> {
    let files = scenario_files(dir)?;
    ensure_dir(out)?;
    let entries: Vec<BatchEntry> = files
        .par_iter()
        .map(|file| {
            let stem = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let out_dir = out.join(&stem);
            let result = run_scenario_files(file, &out_dir, flags);
            let (exit_code, error, compare) = match result {
                Ok(report) => {
                    let code = if report.pass {
                        EXIT_OK
                    } else {
                        EXIT_CHECK_FAILED
                    };
                    (code, None, Some(report))
                }
                Err(e) => (e.exit_code(), Some(e.to_string()), None),
            };
            BatchEntry {
                config: file.display().to_string(),
                out_dir: out_dir.display().to_string(),
                exit_code,
                error,
                compare,
            }
        })
        .collect();
    let summary = BatchSummary {
        tool: TOOL.into(),
        version: VERSION.into(),
        passed: entries.iter().all(|e| e.exit_code == EXIT_OK),
        entries,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
