use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use paraxial_core::wave::{rytov_measurement, ProbeRecord};
use serde::{Deserialize, Serialize};

use crate::bpm::{half_split, TRUNCATION_MARKER};
use crate::config::CompareConfig;
use crate::error::{CliError, Result};
use crate::output::{read_csv_header, read_json, write_json, TOOL, VERSION};
use crate::trace::TraceSummary;

pub const REPORT_FILE: &str = "compare_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinHallRow {
    /// `k⁻¹σ∫B×dp` for σ = +1.
    pub predicted: [f64; 2],
    /// Shift realized by the σ = +1 ray relative to σ = 0.
    pub realized_by_ray: [f64; 2],
    /// `(Δc₊ − Δc₋)/2`
    pub measured: [f64; 2],
    /// Projection of the measurement on the prediction, `m·p/|p|²`.
    pub ratio: Option<f64>,
    pub discrepancy: Option<f64>,
    pub tolerance: f64,
    pub within_noise: bool,
    pub checked: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RytovRow {
    /// `¼∫θ²dφ`
    pub quarter_form: f64,
    /// `½∫θ²dφ`
    pub half_form: f64,
    pub tan_squared: f64,
    pub measured: f64,
    pub discrepancy_quarter: Option<f64>,
    pub discrepancy_half: Option<f64>,
    pub interval: [f64; 2],
    pub inside: bool,
    /// Set when the measurement lies outside the interval.
    pub flagged: bool,
    pub ambiguous_probes: Vec<usize>,
    pub large_angle_warning: bool,
    pub checked: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config_sha256: String,
    pub out_of_regime: bool,
    pub z_end: f64,
    pub spin_hall: SpinHallRow,
    pub rytov: RytovRow,
    pub failed: Vec<String>,
    pub pass: bool,
}

/// Reads the probe series written by `bpm`; a truncated file is rejected.
pub fn read_probes(path: &Path) -> Result<Vec<ProbeRecord>> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    let mut seen_columns = false;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(CliError::io(path))?;
        if line.starts_with(TRUNCATION_MARKER) {
            return Err(CliError::Validation(format!(
                "{}: run was truncated ({line})",
                path.display()
            )));
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_columns {
            if line.trim() != ProbeRecord::CSV_COLUMNS {
                return Err(CliError::Validation(format!(
                    "{}: unexpected columns {line:?}",
                    path.display()
                )));
            }
            seen_columns = true;
            continue;
        }
        out.push(ProbeRecord::parse_csv_row(&line)?);
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no probe rows",
            path.display()
        )));
    }
    Ok(out)
}

fn rel(measured: f64, predicted: f64) -> Option<f64> {
    (predicted != 0.0).then(|| (measured / predicted - 1.0).abs())
}

pub fn spin_hall_row(
    summary: &TraceSummary,
    probes: &[ProbeRecord],
    cmp: &CompareConfig,
) -> Result<SpinHallRow> {
    let plus = summary
        .row(1.0)
        .ok_or_else(|| CliError::Validation("trace summary has no sigma = +1 row".into()))?;
    let predicted = [plus.deflection_quadrature[0], plus.deflection_quadrature[1]];
    let measured = half_split(&probes[0], probes.last().expect("non-empty"));
    let pn = predicted[0].hypot(predicted[1]);
    let mn = measured[0].hypot(measured[1]);
    let ratio = (pn >= cmp.noise_floor)
        .then(|| (measured[0] * predicted[0] + measured[1] * predicted[1]) / (pn * pn));
    let discrepancy = ratio.map(|r| (r - 1.0).abs());
    let within_noise = pn < cmp.noise_floor && mn < cmp.noise_floor;
    let pass = within_noise || discrepancy.is_some_and(|d| d <= cmp.spin_hall_tolerance);
    Ok(SpinHallRow {
        predicted,
        realized_by_ray: plus.realized_shift,
        measured,
        ratio,
        discrepancy,
        tolerance: cmp.spin_hall_tolerance,
        within_noise,
        checked: cmp.check_spin_hall,
        pass,
    })
}

pub fn rytov_row(summary: &TraceSummary, probes: &[ProbeRecord], cmp: &CompareConfig) -> RytovRow {
    let series = rytov_measurement(probes);
    let measured = series.final_rotation();
    let (quarter_form, half_form) = (summary.rytov.quarter_form, summary.rytov.half_form);
    let (lo, hi) = (quarter_form.min(half_form), quarter_form.max(half_form));
    let interval = [
        lo - cmp.rytov_band * lo.abs(),
        hi + cmp.rytov_band * hi.abs(),
    ];
    let all_zero = [quarter_form, half_form, measured]
        .iter()
        .all(|v| v.abs() < cmp.noise_floor);
    let inside = all_zero || (interval[0] <= measured && measured <= interval[1]);
    RytovRow {
        quarter_form,
        half_form,
        tan_squared: summary.rytov.tan_squared,
        measured,
        discrepancy_quarter: rel(measured, quarter_form),
        discrepancy_half: rel(measured, half_form),
        interval,
        inside,
        flagged: !inside,
        ambiguous_probes: series.ambiguous,
        large_angle_warning: summary.rytov.large_angle_warning,
        checked: cmp.check_rytov,
        pass: inside,
    }
}

/// Joins a trace summary with a probe series of the same scenario.
pub fn cmd_compare(
    summary_path: &Path,
    probes_path: &Path,
    out_dir: Option<&Path>,
) -> Result<CompareReport> {
    let summary: TraceSummary = read_json(summary_path)?;
    let header = read_csv_header(probes_path)?;
    let scenario = header.get("scenario").cloned().unwrap_or_default();
    let hash = header.get("config_sha256").cloned().unwrap_or_default();
    if scenario != summary.meta.scenario || hash != summary.meta.config_sha256 {
        return Err(CliError::ScenarioMismatch {
            trace: summary.meta.scenario.clone(),
            trace_hash: summary.meta.config_sha256.clone(),
            probes: scenario,
            probes_hash: hash,
        });
    }
    let probes = read_probes(probes_path)?;
    let z_last = probes.last().expect("non-empty").z;
    if (z_last - summary.z_end).abs() > 1e-9 * summary.z_end.abs().max(1.0) {
        return Err(CliError::Validation(format!(
            "probe series ends at z = {z_last}, trace at z = {}",
            summary.z_end
        )));
    }

    let cmp = &summary.compare;
    let spin_hall = spin_hall_row(&summary, &probes, cmp)?;
    let rytov = rytov_row(&summary, &probes, cmp);
    let mut failed = Vec::new();
    if spin_hall.checked && !spin_hall.pass {
        failed.push("spin_hall".to_string());
    }
    if rytov.checked && !rytov.pass {
        failed.push("rytov".to_string());
    }
    let report = CompareReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        scenario: summary.meta.scenario.clone(),
        config_sha256: summary.meta.config_sha256.clone(),
        out_of_regime: summary.meta.out_of_regime,
        z_end: summary.z_end,
        spin_hall,
        rytov,
        pass: failed.is_empty(),
        failed,
    };
    if let Some(dir) = out_dir {
        crate::output::ensure_dir(dir)?;
        write_json(&dir.join(REPORT_FILE), &report)?;
    }
    Ok(report)
}
