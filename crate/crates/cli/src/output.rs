use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, UNITS_NOTE};
use crate::error::{CliError, Result};

pub const TOOL: &str = "paraxial";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamped into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config_sha256: String,
    pub units: String,
    pub seed: u64,
    pub out_of_regime: bool,
}

impl RunMeta {
    pub fn new(loaded: &LoadedConfig, seed: u64, out_of_regime: bool) -> Self {
        RunMeta {
            tool: TOOL.into(),
            version: VERSION.into(),
            scenario: loaded.config.name.clone(),
            config_sha256: loaded.hash.clone(),
            units: UNITS_NOTE.into(),
            seed,
            out_of_regime,
        }
    }

    /// `key: value` lines for CSV headers (without the `#`).
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("tool: {} {}", self.tool, self.version),
            format!("scenario: {}", self.scenario),
            format!("config_sha256: {}", self.config_sha256),
            format!("units: {}", self.units),
            format!("seed: {}", self.seed),
            format!("out_of_regime: {}", self.out_of_regime),
        ]
    }
}

/// Reads the leading `# key: value` lines of a CSV file.
pub fn read_csv_header(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut out = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(CliError::io(path))?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.trim().split_once(':') {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("cannot serialize {}: {e}", path.display())))?;
    let mut f = fs::File::create(path).map_err(CliError::io(path))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(CliError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
