use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use paraxial_core::container::GridContainer;
use paraxial_core::wave::{
    pair_memory_estimate, rytov_measurement, FieldGrid, PairSimulation, ProbeRecord,
};
use paraxial_core::Helicity;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json, RunMeta};

pub const PROBES_FILE: &str = "probes.csv";
pub const SUMMARY_FILE: &str = "bpm_summary.json";
pub const TRUNCATION_MARKER: &str = "# TRUNCATED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpmSummary {
    pub meta: RunMeta,
    pub k: f64,
    pub n0: f64,
    pub grid_n: usize,
    pub extent: f64,
    pub steps: usize,
    pub dz: f64,
    pub z_end: f64,
    pub stability_margin: f64,
    pub memory_bytes: usize,
    /// `(Δc₊ − Δc₋)/2` at `z_end`, displacements taken from `z = 0`.
    pub half_split: [f64; 2],
    pub rotation: f64,
    pub ambiguous_probes: Vec<usize>,
    pub beta_norm_drift: f64,
    /// Relative L² change net of mask absorption.
    pub l2_drift_plus: f64,
    pub l2_drift_minus: f64,
    pub absorbed_energy: f64,
    pub snapshots: Vec<String>,
}

fn write_snapshot(
    out_dir: &Path,
    field: &FieldGrid,
    meta: &RunMeta,
    label: &str,
    step: usize,
    n0: f64,
) -> Result<String> {
    let name = format!("snapshot_{label}_{step:06}.pxg");
    let path = out_dir.join(&name);
    let tag = format!(
        "scenario={};config_sha256={};helicity={label};step={step};tool={} {}",
        meta.scenario, meta.config_sha256, meta.tool, meta.version
    );
    field.to_container(n0, tag).save(&path)?;
    Ok(name)
}

/// Reads a snapshot written by `bpm`; the helicity label picks the matrix set.
pub fn load_snapshot(path: &Path, helicity: Helicity) -> Result<FieldGrid> {
    let cont = GridContainer::load(path)?;
    Ok(FieldGrid::from_container(
        &cont,
        paraxial_core::clifford::MatrixSet::for_helicity(helicity),
    )?)
}

pub fn cmd_bpm(
    loaded: &LoadedConfig,
    out_dir: &Path,
    seed: u64,
    snapshots: bool,
) -> Result<BpmSummary> {
    let cfg = &loaded.config;
    let profile = cfg.medium_profile(&loaded.base_dir())?;
    let geom = cfg.geometry()?;
    let prop = cfg.propagation(profile.n0());
    let (steps, dz) = cfg.steps();

    let memory = pair_memory_estimate(geom);
    let budget = cfg.grid.memory_budget_mb * 1024.0 * 1024.0;
    if memory as f64 > budget {
        return Err(CliError::Validation(format!(
            "paired run needs about {:.1} MiB, above the budget of {} MiB (grid.memory_budget_mb)",
            memory as f64 / 1048576.0,
            cfg.grid.memory_budget_mb
        )));
    }

    let meta = RunMeta::new(loaded, seed, profile.out_of_regime());
    let mut sim = PairSimulation::new(&profile, &cfg.beam(Helicity::Plus), geom, prop)?;
    let l2_start = [sim.plus.l2_norm(), sim.minus.l2_norm()];
    ensure_dir(out_dir)?;
    let probes_path = out_dir.join(PROBES_FILE);
    let mut w = BufWriter::new(File::create(&probes_path).map_err(CliError::io(&probes_path))?);
    let io = CliError::io(&probes_path);
    let mut header = meta.comment_lines();
    header.push(format!("k: {}", cfg.k));
    header.push(format!(
        "grid: {}x{} over {}",
        cfg.grid.n, cfg.grid.n, cfg.grid.extent
    ));
    header.push(format!("dz: {dz:.17e}"));
    header.push(format!("steps: {steps}"));
    header.push(format!("stability_margin: {:.6}", sim.stability().margin));
    header
        .push("runs: plus = standard matrix set, minus = conjugate matrix set, same launch".into());
    let mut text = String::new();
    for line in header {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str(ProbeRecord::CSV_COLUMNS);
    text.push('\n');
    w.write_all(text.as_bytes()).map_err(io)?;

    let snapshot_every = match (cfg.grid.snapshot_every, snapshots) {
        (0, true) => steps,
        (n, _) => n,
    };
    let mut snapshot_files = Vec::new();
    let mut probes = Vec::with_capacity(steps / cfg.grid.probe_every + 2);
    let mut failure = None;

    match sim.probe() {
        Ok(p) => probes.push(p),
        Err(e) => failure = Some(e),
    }
    if let Some(p) = probes.first() {
        writeln!(w, "{}", p.csv_row()).map_err(CliError::io(&probes_path))?;
    }
    if failure.is_none() {
        for s in 1..=steps {
            if let Err(e) = sim.advance() {
                failure = Some(e);
                break;
            }
            if s % cfg.grid.probe_every == 0 || s == steps {
                match sim.probe() {
                    Ok(p) => {
                        writeln!(w, "{}", p.csv_row()).map_err(CliError::io(&probes_path))?;
                        probes.push(p);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            if snapshot_every > 0 && s % snapshot_every == 0 {
                snapshot_files.push(write_snapshot(
                    out_dir,
                    &sim.plus,
                    &meta,
                    "plus",
                    s,
                    profile.n0(),
                )?);
                snapshot_files.push(write_snapshot(
                    out_dir,
                    &sim.minus,
                    &meta,
                    "minus",
                    s,
                    profile.n0(),
                )?);
            }
        }
    }
    if let Some(e) = failure {
        writeln!(w, "{TRUNCATION_MARKER} at z = {}: {e}", sim.z())
            .map_err(CliError::io(&probes_path))?;
        w.flush().map_err(CliError::io(&probes_path))?;
        return Err(e.into());
    }
    w.flush().map_err(CliError::io(&probes_path))?;

    let first = probes[0];
    let last = *probes.last().expect("at least one probe");
    let rot = rytov_measurement(&probes);
    // Net of what the mask removed.
    let l2 = |f: &FieldGrid, start: f64| (f.l2_norm() + f.absorbed - start) / start;
    let beta_drift = probes
        .iter()
        .map(|p| ((p.beta_norm - first.beta_norm) / first.beta_norm).abs())
        .fold(0.0, f64::max);
    let summary = BpmSummary {
        meta,
        k: cfg.k,
        n0: profile.n0(),
        grid_n: cfg.grid.n,
        extent: cfg.grid.extent,
        steps,
        dz,
        z_end: sim.z(),
        stability_margin: sim.stability().margin,
        memory_bytes: memory,
        half_split: half_split(&first, &last),
        rotation: rot.final_rotation(),
        ambiguous_probes: rot.ambiguous,
        beta_norm_drift: beta_drift,
        l2_drift_plus: l2(&sim.plus, l2_start[0]),
        l2_drift_minus: l2(&sim.minus, l2_start[1]),
        absorbed_energy: last.absorbed_energy,
        snapshots: snapshot_files,
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// `(Δc₊ − Δc₋)/2` between two probes.
pub fn half_split(first: &ProbeRecord, last: &ProbeRecord) -> [f64; 2] {
    [
        0.5 * ((last.cx_plus - first.cx_plus) - (last.cx_minus - first.cx_minus)),
        0.5 * ((last.cy_plus - first.cy_plus) - (last.cy_minus - first.cy_minus)),
    ]
}
