//! Scenario files.
//!
//! A scenario is a TOML document. Every file must state `units = "transverse"`:
//! lengths are in one transverse unit, `k` is the dimensionless wave number in
//! that unit and momenta are dimensionless with `|p| = n`. Unknown keys are
//! rejected. After parsing, every default is filled in so that the canonical
//! form (and its hash) describes the run completely.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use paraxial_core::container::GridContainer;
use paraxial_core::medium::{Bounds, MediumKind, MediumProfile, RegimePolicy};
use paraxial_core::transport::{StepControl, TraceOptions};
use paraxial_core::wave::{BeamSpec, GridGeometry, MaskSpec, PropagationConfig};
use paraxial_core::{Helicity, Vec2, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const UNITS: &str = "transverse";
pub const UNITS_NOTE: &str = "lengths in transverse units; k dimensionless in those units; |p| = n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub units: String,
    pub name: String,
    pub k: f64,
    pub z_end: f64,
    #[serde(default)]
    pub seed: u64,
    /// Accept media whose perturbation exceeds 10% of `n0`; outputs are tagged.
    #[serde(default)]
    pub allow_out_of_regime: bool,
    pub medium: MediumConfig,
    pub beam: BeamConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MediumConfig {
    Homogeneous {
        #[serde(default = "one")]
        n0: f64,
    },
    /// `ζ = g·x⊥`
    LinearGradient {
        #[serde(default = "one")]
        n0: f64,
        g: [f64; 2],
        /// Transverse half-size of the domain; defaults to half the grid extent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_width: Option<f64>,
    },
    /// `ζ = −½α²|r⊥ − c|²`
    ParabolicGrin {
        #[serde(default = "one")]
        n0: f64,
        alpha: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_width: Option<f64>,
    },
    /// `ζ = a·exp(−|r − c|²/w²)`
    GaussianDefect {
        #[serde(default = "one")]
        n0: f64,
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// Samples in the binary grid container; the path is relative to the config file.
    Gridded { file: PathBuf },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub waist: f64,
    #[serde(default)]
    pub center: [f64; 2],
    /// Transverse momentum `p⊥` of the launch; also the initial ray direction.
    #[serde(default)]
    pub tilt: [f64; 2],
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `h = min(h_max, max_dp/|dp/dz|)`
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub step: StepRule,
    pub max_dp: f64,
    pub h_max: f64,
    /// Step for `step = "fixed"`.
    pub h: f64,
    pub zeroth_order: bool,
    pub strict_paraxial: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            step: StepRule::Adaptive,
            max_dp: 1e-3,
            h_max: 0.05,
            h: 0.01,
            zeroth_order: false,
            strict_paraxial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Samples per transverse axis.
    pub n: usize,
    /// Physical size of the square grid.
    pub extent: f64,
    /// Upper bound on the z-step; the run uses `z_end / ceil(z_end / dz)`.
    /// Defaults to `3π/(2k)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dz: Option<f64>,
    pub band_limit: f64,
    pub probe_every: usize,
    /// Write field snapshots every this many steps; 0 disables them.
    pub snapshot_every: usize,
    pub memory_budget_mb: f64,
    pub mask_fraction: f64,
    pub mask_strength: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 256,
            extent: 8.0,
            dz: None,
            band_limit: 0.45,
            probe_every: 10,
            snapshot_every: 0,
            memory_budget_mb: 2048.0,
            mask_fraction: 0.1,
            mask_strength: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Allowed `|measured/predicted − 1|` for the spin-Hall split.
    pub spin_hall_tolerance: f64,
    /// Relative widening of the interval spanned by the two Rytov predictions.
    pub rytov_band: f64,
    /// Magnitudes below this count as zero on both sides.
    pub noise_floor: f64,
    /// Whether each row decides pass/fail; both rows are always reported.
    pub check_spin_hall: bool,
    pub check_rytov: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            spin_hall_tolerance: 0.3,
            rytov_band: 0.3,
            noise_floor: 1e-9,
            check_spin_hall: true,
            check_rytov: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Relative to the working directory; `--out` overrides it.
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub path: PathBuf,
    /// `sha256` of the canonical form.
    pub hash: String,
}

impl LoadedConfig {
    pub fn base_dir(&self) -> PathBuf {
        self.path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let src = fs::read_to_string(path).map_err(CliError::io(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let config = parse_config(&src, &path.display().to_string(), base)?;
    let hash = config_hash(&config)?;
    Ok(LoadedConfig {
        config,
        path: path.to_path_buf(),
        hash,
    })
}

/// Parses, validates and fills defaults. `origin` names the source in messages;
/// `base_dir` resolves gridded medium files.
pub fn parse_config(src: &str, origin: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(src, s.start)).unwrap_or((1, 1));
        CliError::Config {
            path: origin.to_string(),
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    fill_defaults(&mut cfg);
    validate(&cfg, base_dir).map_err(|(table, key, message)| {
        let (line, column) = locate(src, table, key);
        CliError::Config {
            path: origin.to_string(),
            line,
            column,
            message,
        }
    })?;
    Ok(cfg)
}

/// The fully defaulted TOML form; parsing it gives back an equal config.
pub fn canonical(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| CliError::Validation(format!("cannot serialize config: {e}")))
}

pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let digest = Sha256::digest(canonical(cfg)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn fill_defaults(cfg: &mut ScenarioConfig) {
    if cfg.grid.dz.is_none() && cfg.k > 0.0 {
        cfg.grid.dz = Some(3.0 * PI / (2.0 * cfg.k));
    }
    let half = 0.5 * cfg.grid.extent;
    match &mut cfg.medium {
        MediumConfig::LinearGradient { half_width, .. }
        | MediumConfig::ParabolicGrin { half_width, .. } => {
            half_width.get_or_insert(half);
        }
        _ => {}
    }
}

type Invalid = (Option<&'static str>, &'static str, String);

fn positive(
    table: Option<&'static str>,
    key: &'static str,
    v: f64,
) -> std::result::Result<(), Invalid> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((
            table,
            key,
            format!("`{key}` must be positive and finite, got {v}"),
        ))
    }
}

fn validate(cfg: &ScenarioConfig, base_dir: &Path) -> std::result::Result<(), Invalid> {
    if cfg.units != UNITS {
        return Err((
            None,
            "units",
            format!(
                "`units` must be \"{UNITS}\" ({UNITS_NOTE}), got {:?}",
                cfg.units
            ),
        ));
    }
    if cfg.name.is_empty()
        || !cfg
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err((
            None,
            "name",
            format!("`name` must be non-empty [A-Za-z0-9_-], got {:?}", cfg.name),
        ));
    }
    positive(None, "k", cfg.k)?;
    positive(None, "z_end", cfg.z_end)?;

    let m = Some("medium");
    match &cfg.medium {
        MediumConfig::Homogeneous { n0 } => positive(m, "n0", *n0)?,
        MediumConfig::LinearGradient { n0, g, half_width } => {
            positive(m, "n0", *n0)?;
            if !g.iter().all(|v| v.is_finite()) {
                return Err((m, "g", "`g` must be finite".into()));
            }
            positive(m, "half_width", half_width.unwrap_or(f64::NAN))?;
        }
        MediumConfig::ParabolicGrin {
            n0,
            alpha,
            center,
            half_width,
        } => {
            positive(m, "n0", *n0)?;
            positive(m, "alpha", *alpha)?;
            if !center.iter().all(|v| v.is_finite()) {
                return Err((m, "center", "`center` must be finite".into()));
            }
            positive(m, "half_width", half_width.unwrap_or(f64::NAN))?;
        }
        MediumConfig::GaussianDefect {
            n0,
            amplitude,
            width,
            center,
        } => {
            positive(m, "n0", *n0)?;
            positive(m, "width", *width)?;
            if !amplitude.is_finite() || !center.iter().all(|v| v.is_finite()) {
                return Err((
                    m,
                    "amplitude",
                    "`amplitude` and `center` must be finite".into(),
                ));
            }
        }
        MediumConfig::Gridded { file } => {
            let resolved = base_dir.join(file);
            if !resolved.is_file() {
                return Err((
                    m,
                    "file",
                    format!("gridded medium file {} does not exist", resolved.display()),
                ));
            }
        }
    }

    let b = Some("beam");
    positive(b, "waist", cfg.beam.waist)?;
    positive(b, "amplitude", cfg.beam.amplitude)?;
    if !cfg
        .beam
        .center
        .iter()
        .chain(&cfg.beam.tilt)
        .all(|v| v.is_finite())
    {
        return Err((b, "tilt", "`center` and `tilt` must be finite".into()));
    }
    let tilt = Vec2::new(cfg.beam.tilt[0], cfg.beam.tilt[1]).norm();
    if let Some(n0) = cfg.medium.n0() {
        if tilt >= n0 {
            return Err((
                b,
                "tilt",
                format!("|tilt| = {tilt} must stay below n0 = {n0}"),
            ));
        }
    }

    let t = Some("trace");
    positive(t, "max_dp", cfg.trace.max_dp)?;
    positive(t, "h_max", cfg.trace.h_max)?;
    positive(t, "h", cfg.trace.h)?;

    let gr = Some("grid");
    let g = &cfg.grid;
    if g.n < 4 || !g.n.is_multiple_of(2) {
        return Err((
            gr,
            "n",
            format!("`n` must be even and at least 4, got {}", g.n),
        ));
    }
    positive(gr, "extent", g.extent)?;
    positive(gr, "dz", g.dz.unwrap_or(f64::NAN))?;
    positive(gr, "band_limit", g.band_limit)?;
    positive(gr, "memory_budget_mb", g.memory_budget_mb)?;
    if g.probe_every == 0 {
        return Err((gr, "probe_every", "`probe_every` must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&g.mask_fraction) {
        return Err((
            gr,
            "mask_fraction",
            format!(
                "`mask_fraction` must be in [0, 0.5), got {}",
                g.mask_fraction
            ),
        ));
    }
    if !(g.mask_strength >= 0.0) || !g.mask_strength.is_finite() {
        return Err((
            gr,
            "mask_strength",
            "`mask_strength` must be non-negative".into(),
        ));
    }

    let c = Some("compare");
    positive(c, "spin_hall_tolerance", cfg.compare.spin_hall_tolerance)?;
    if !(cfg.compare.rytov_band >= 0.0) {
        return Err((c, "rytov_band", "`rytov_band` must be non-negative".into()));
    }
    positive(c, "noise_floor", cfg.compare.noise_floor)?;
    Ok(())
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

/// Line and column of `key` inside `[table]` (or the root), falling back to
/// the table header and then to the first line.
fn locate(src: &str, table: Option<&str>, key: &str) -> (usize, usize) {
    let mut current: Option<String> = None;
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim_start();
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.split(']').next().unwrap_or("").trim().to_string();
            if table == Some(name.as_str()) {
                header = Some((i + 1, raw.len() - line.len() + 1));
            }
            current = Some(name);
            continue;
        }
        if current.as_deref() != table {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return (i + 1, raw.len() - line.len() + 1);
            }
        }
    }
    header.unwrap_or((1, 1))
}

impl MediumConfig {
    pub fn n0(&self) -> Option<f64> {
        match self {
            MediumConfig::Homogeneous { n0 }
            | MediumConfig::LinearGradient { n0, .. }
            | MediumConfig::ParabolicGrin { n0, .. }
            | MediumConfig::GaussianDefect { n0, .. } => Some(*n0),
            MediumConfig::Gridded { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MediumConfig::Homogeneous { .. } => "homogeneous",
            MediumConfig::LinearGradient { .. } => "linear-gradient",
            MediumConfig::ParabolicGrin { .. } => "parabolic-grin",
            MediumConfig::GaussianDefect { .. } => "gaussian-defect",
            MediumConfig::Gridded { .. } => "gridded",
        }
    }
}

impl ScenarioConfig {
    fn policy(&self) -> RegimePolicy {
        if self.allow_out_of_regime {
            RegimePolicy::Override
        } else {
            RegimePolicy::Enforce
        }
    }

    pub fn medium_profile(&self, base_dir: &Path) -> Result<MediumProfile> {
        let policy = self.policy();
        let half = |h: &Option<f64>| Bounds::transverse(h.unwrap_or(0.5 * self.grid.extent));
        let profile = match &self.medium {
            MediumConfig::Homogeneous { n0 } => MediumProfile::with_policy(
                *n0,
                MediumKind::Homogeneous,
                Bounds::unbounded(),
                policy,
            )?,
            MediumConfig::LinearGradient { n0, g, half_width } => MediumProfile::with_policy(
                *n0,
                MediumKind::LinearGradient {
                    g: Vec2::new(g[0], g[1]),
                },
                half(half_width)?,
                policy,
            )?,
            MediumConfig::ParabolicGrin {
                n0,
                alpha,
                center,
                half_width,
            } => MediumProfile::with_policy(
                *n0,
                MediumKind::ParabolicGrin {
                    alpha: *alpha,
                    center: Vec2::new(center[0], center[1]),
                },
                half(half_width)?,
                policy,
            )?,
            MediumConfig::GaussianDefect {
                n0,
                amplitude,
                width,
                center,
            } => MediumProfile::with_policy(
                *n0,
                MediumKind::GaussianDefect {
                    amplitude: *amplitude,
                    width: *width,
                    center: Vec3::new(center[0], center[1], center[2]),
                },
                Bounds::unbounded(),
                policy,
            )?,
            MediumConfig::Gridded { file } => {
                GridContainer::load(&base_dir.join(file))?.to_medium_with(policy)?
            }
        };
        Ok(profile)
    }

    pub fn trace_options(&self, zeroth_order: bool, strict_paraxial: bool) -> TraceOptions {
        let t = &self.trace;
        TraceOptions {
            step: match t.step {
                StepRule::Adaptive => StepControl::MaxMomentumChange {
                    max_dp: t.max_dp,
                    h_max: t.h_max,
                },
                StepRule::Fixed => StepControl::Fixed(t.h),
            },
            zeroth_order: t.zeroth_order || zeroth_order,
            strict_paraxial: t.strict_paraxial || strict_paraxial,
            ..TraceOptions::default()
        }
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        Ok(GridGeometry::square(self.grid.n, self.grid.extent)?)
    }

    /// Step count and the step that lands exactly on `z_end`.
    pub fn steps(&self) -> (usize, f64) {
        let dz_max = self.grid.dz.unwrap_or(3.0 * PI / (2.0 * self.k));
        let n = ((self.z_end / dz_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (n, self.z_end / n as f64)
    }

    pub fn propagation(&self, n0: f64) -> PropagationConfig {
        let (_, dz) = self.steps();
        PropagationConfig {
            band_limit: self.grid.band_limit,
            mask: MaskSpec {
                fraction: self.grid.mask_fraction,
                strength: self.grid.mask_strength,
            },
            ..PropagationConfig::new(self.k, n0, dz)
        }
    }

    pub fn beam(&self, helicity: Helicity) -> BeamSpec {
        BeamSpec {
            waist: self.beam.waist,
            center: Vec2::new(self.beam.center[0], self.beam.center[1]),
            tilt: Vec2::new(self.beam.tilt[0], self.beam.tilt[1]),
            helicity,
            amplitude: self.beam.amplitude,
        }
    }
}
