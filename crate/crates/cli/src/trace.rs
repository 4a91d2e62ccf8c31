use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use paraxial_core::transport::{
    rytov_angle_closed, spin_hall_deflection, trace_ray, RayState, Trajectory,
};
use paraxial_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::config::{CompareConfig, LoadedConfig};
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json, RunMeta};

pub const SUMMARY_FILE: &str = "trace_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sigma: f64,
    pub file: String,
    pub steps: usize,
    pub final_r: [f64; 3],
    pub final_p: [f64; 3],
    /// `k⁻¹σ∫B×dp` along this trajectory.
    pub deflection_quadrature: [f64; 3],
    /// `r⊥(σ) − r⊥(σ = 0)` at `z_end`, as realized by the ODE.
    pub realized_shift: [f64; 2],
    pub berry_phase: f64,
    pub dynamical_phase: f64,
    pub dispersion_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RytovPrediction {
    /// `¼∫θ²dφ`
    pub quarter_form: f64,
    /// `½∫θ²dφ`
    pub half_form: f64,
    /// `¼∫tan²θ dφ`
    pub tan_squared: f64,
    /// Net azimuth swept by the momentum.
    pub azimuth_swept: f64,
    pub large_angle_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub meta: RunMeta,
    pub k: f64,
    pub z_end: f64,
    pub n0: f64,
    pub medium: String,
    pub zeroth_order: bool,
    pub strict_paraxial: bool,
    pub rows: Vec<TraceRow>,
    /// From the σ = 0 baseline path.
    pub rytov: RytovPrediction,
    /// `|realized/quadrature − 1|` for the σ = +1 shift, along the quadrature direction.
    pub shift_consistency: Option<f64>,
    pub compare: CompareConfig,
}

impl TraceSummary {
    pub fn row(&self, sigma: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.sigma == sigma)
    }
}

fn sigma_label(sigma: f64) -> &'static str {
    if sigma > 0.0 {
        "plus"
    } else if sigma < 0.0 {
        "minus"
    } else {
        "zero"
    }
}

fn xyz(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn cmd_trace(
    loaded: &LoadedConfig,
    out_dir: &Path,
    seed: u64,
    zeroth_order: bool,
    strict_paraxial: bool,
) -> Result<TraceSummary> {
    let cfg = &loaded.config;
    let profile = cfg.medium_profile(&loaded.base_dir())?;
    let opts = cfg.trace_options(zeroth_order, strict_paraxial);
    let meta = RunMeta::new(loaded, seed, profile.out_of_regime());
    ensure_dir(out_dir)?;

    let r0 = Vec3::new(cfg.beam.center[0], cfg.beam.center[1], 0.0);
    let p0 = paraxial_core::Vec2::new(cfg.beam.tilt[0], cfg.beam.tilt[1]);
    let sigmas = [-1.0, 0.0, 1.0];
    let trajs: Vec<Trajectory> = sigmas
        .iter()
        .map(|&sigma| {
            let init = RayState::launch(&profile, r0, p0, sigma)?;
            trace_ray(&profile, &init, cfg.k, cfg.z_end, opts)
        })
        .collect::<paraxial_core::Result<_>>()?;
    let base = trajs[1].last().r;

    let mut rows = Vec::new();
    for (&sigma, traj) in sigmas.iter().zip(&trajs) {
        let file = format!("trace_sigma_{}.csv", sigma_label(sigma));
        let path = out_dir.join(&file);
        let mut comments = meta.comment_lines();
        comments.push(format!("sigma: {sigma}"));
        comments.push(format!("k: {}", cfg.k));
        comments.push(format!("integrator: {}", traj.meta.integrator));
        comments.push(format!("zeroth_order: {}", traj.meta.zeroth_order));
        comments.push(format!("strict_paraxial: {}", traj.meta.strict_paraxial));
        let f = File::create(&path).map_err(CliError::io(&path))?;
        traj.write_csv(BufWriter::new(f), &comments)?;

        let last = traj.last();
        rows.push(TraceRow {
            sigma,
            file,
            steps: traj.meta.steps,
            final_r: xyz(last.r),
            final_p: xyz(last.p),
            deflection_quadrature: xyz(spin_hall_deflection(traj, cfg.k, sigma)),
            realized_shift: [last.r.x - base.x, last.r.y - base.y],
            berry_phase: last.berry_phase,
            dynamical_phase: last.dynamical_phase,
            dispersion_error: traj.dispersion_error(&profile)?,
        });
    }

    let (theta, phi) = trajs[1].theta_phi_history();
    let angles = rytov_angle_closed(&theta, &phi)?;
    let rytov = RytovPrediction {
        quarter_form: angles.theta_squared,
        half_form: angles.solid_angle,
        tan_squared: angles.tan_squared,
        azimuth_swept: phi.last().copied().unwrap_or(0.0) - phi.first().copied().unwrap_or(0.0),
        large_angle_warning: angles.large_angle_warning,
    };

    let plus = &rows[2];
    let q = plus.deflection_quadrature;
    let qn = q[0] * q[0] + q[1] * q[1];
    let shift_consistency = (qn > 0.0).then(|| {
        ((plus.realized_shift[0] * q[0] + plus.realized_shift[1] * q[1]) / qn - 1.0).abs()
    });

    let summary = TraceSummary {
        meta,
        k: cfg.k,
        z_end: cfg.z_end,
        n0: profile.n0(),
        medium: cfg.medium.kind_name().into(),
        zeroth_order: opts.zeroth_order,
        strict_paraxial: opts.strict_paraxial,
        rows,
        rytov,
        shift_consistency,
        compare: cfg.compare.clone(),
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
