//! Split-step Fourier integrator of the four-component z-evolution
//! `−ik⁻¹∂_zΨ = HΨ`, `H = −(n0 + ζ)β + βM⊥·p⊥`, used as an oracle for the
//! geometric predictions.
//!
//! One step is symmetric (Strang) splitting: a half potential step
//! `exp(+ikζβ dz/2)` in position space, the exact kinetic exponential per
//! transverse Fourier mode, another half potential step, then the absorbing
//! mask. The fast carrier `exp(ikn0z)` is factored out of the kinetic step.
//!
//! The two Fourier bands of `H` (forward and backward) come within reach of
//! each other once `2k·dz·E` wraps around `2π`; the step then couples them
//! through the potential and the split operator is no longer stable. Modes
//! above a circular band limit are discarded and [`stability_margin`] checks
//! that the forward and backward phase arcs stay apart.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::clifford::{DiracMatrixSet, MatrixSet};
use crate::container::{ContainerKind, GridContainer};
use crate::fw::fw_energy;
use crate::linalg::{c, I};
use crate::medium::MediumProfile;
use crate::{Error, Helicity, Mat4, Result, Vec2};

/// Minimum samples per waist.
pub const MIN_CELLS_PER_WAIST: f64 = 8.0;

/// Transverse periodic grid; `x_i = (i − nx/2)·dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Physical size `[Lx, Ly]`.
    pub extent: [f64; 2],
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, extent: [f64; 2]) -> Result<Self> {
        if nx < 4 || ny < 4 || !nx.is_multiple_of(2) || !ny.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "grid dimensions must be even and at least 4, got {nx}x{ny}"
            )));
        }
        if extent.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid extent must be positive, got {extent:?}"
            )));
        }
        Ok(GridGeometry { nx, ny, extent })
    }

    pub fn square(n: usize, extent: f64) -> Result<Self> {
        Self::new(n, n, [extent, extent])
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            self.extent[0] / self.nx as f64,
            self.extent[1] / self.ny as f64,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        let [dx, dy] = self.spacing();
        dx * dy
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.spacing()[0];
        (0..self.nx)
            .map(|i| (i as f64 - (self.nx / 2) as f64) * dx)
            .collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        let dy = self.spacing()[1];
        (0..self.ny)
            .map(|j| (j as f64 - (self.ny / 2) as f64) * dy)
            .collect()
    }

    /// Dimensionless transverse momenta `p = k_⊥/k` in FFT order.
    pub fn momenta(&self, k: f64) -> (Vec<f64>, Vec<f64>) {
        let freq = |n: usize, l: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let m = if i < n / 2 {
                        i as f64
                    } else {
                        i as f64 - n as f64
                    };
                    TAU * m / (l * k)
                })
                .collect()
        };
        (freq(self.nx, self.extent[0]), freq(self.ny, self.extent[1]))
    }

    /// Largest momentum representable along both axes.
    pub fn nyquist(&self, k: f64) -> f64 {
        let [dx, dy] = self.spacing();
        (PI / (dx * k)).min(PI / (dy * k))
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
}

/// Absorbing boundary: `m(u) = exp(−strength·u⁴)` per axis, where `u` runs
/// from 0 at the inner edge of the outer `fraction` of the grid to 1 at the edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub fraction: f64,
    pub strength: f64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            fraction: 0.1,
            strength: 0.5,
        }
    }
}

impl MaskSpec {
    fn profile(&self, coords: &[f64], extent: f64) -> Vec<f64> {
        let inner = (0.5 - self.fraction) * extent;
        let width = self.fraction * extent;
        coords
            .iter()
            .map(|x| {
                if width <= 0.0 {
                    return 1.0;
                }
                let u = ((x.abs() - inner) / width).max(0.0);
                (-self.strength * u.powi(4)).exp()
            })
            .collect()
    }

    fn interior(&self, x: f64, extent: f64) -> bool {
        x.abs() <= (0.5 - self.fraction) * extent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub k: f64,
    pub n0: f64,
    pub dz: f64,
    /// Modes with `|p⊥|` above this are discarded by the kinetic step.
    pub band_limit: f64,
    /// Factor `exp(−ikn0dz)` out of every step.
    pub carrier_reference: bool,
    pub mask: MaskSpec,
}

impl PropagationConfig {
    /// Defaults: band limit 0.45, carrier referencing on, 10% mask.
    pub fn new(k: f64, n0: f64, dz: f64) -> Self {
        PropagationConfig {
            k,
            n0,
            dz,
            band_limit: 0.45,
            carrier_reference: true,
            mask: MaskSpec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("n0", self.n0),
            ("dz", self.dz),
            ("band_limit", self.band_limit),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.band_limit < self.n0) {
            return Err(Error::NonParaxial {
                what: "band limit must stay below n0",
                value: self.band_limit,
                limit: self.n0,
            });
        }
        if !(0.0..0.5).contains(&self.mask.fraction) || !(self.mask.strength >= 0.0) {
            return Err(Error::InvalidInput(
                "mask fraction must be in [0, 0.5) and strength >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub waist: f64,
    pub center: Vec2,
    /// Transverse momentum `p⊥` of the carrier.
    pub tilt: Vec2,
    pub helicity: Helicity,
    pub amplitude: f64,
}

impl BeamSpec {
    pub fn new(waist: f64, helicity: Helicity) -> Self {
        BeamSpec {
            waist,
            center: Vec2::zeros(),
            tilt: Vec2::zeros(),
            helicity,
            amplitude: 1.0,
        }
    }

    /// Mirror image under `y → −y`.
    pub fn mirrored_y(&self) -> Self {
        BeamSpec {
            center: Vec2::new(self.center.x, -self.center.y),
            tilt: Vec2::new(self.tilt.x, -self.tilt.y),
            ..*self
        }
    }
}

/// Four complex planes on the transverse grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub geom: GridGeometry,
    pub z: f64,
    pub set: MatrixSet,
    pub carrier_reference: bool,
    /// L² energy removed by the absorbing mask so far.
    pub absorbed: f64,
    pub components: [Vec<Complex64>; 4],
}

impl FieldGrid {
    pub fn zeros(geom: GridGeometry, set: MatrixSet) -> Self {
        let plane = vec![c(0.0); geom.len()];
        FieldGrid {
            geom,
            z: 0.0,
            set,
            carrier_reference: true,
            absorbed: 0.0,
            components: [plane.clone(), plane.clone(), plane.clone(), plane],
        }
    }

    /// `Σ|c|² dA` over all components.
    pub fn l2_norm(&self) -> f64 {
        (0..4).map(|i| self.component_energy(i)).sum()
    }

    /// `Σ(|c1|² + |c2|² − |c3|² − |c4|²) dA`, conserved by the pseudo-Hermitian evolution.
    pub fn beta_norm(&self) -> f64 {
        self.component_energy(0) + self.component_energy(1)
            - self.component_energy(2)
            - self.component_energy(3)
    }

    pub fn component_energy(&self, i: usize) -> f64 {
        self.components[i].iter().map(|v| v.norm_sqr()).sum::<f64>() * self.geom.cell_area()
    }

    /// Component carrying the requested helicity in this field's matrix set.
    pub fn component_for(&self, helicity: Helicity) -> usize {
        match (helicity, self.set.is_conjugate()) {
            (Helicity::Plus, false) | (Helicity::Minus, true) => 0,
            _ => 3,
        }
    }

    /// `arg Σ c` of the given component.
    pub fn mean_phase(&self, component: usize) -> f64 {
        self.components[component].iter().sum::<Complex64>().arg()
    }

    pub fn is_finite(&self) -> bool {
        self.components
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// `Ψ(x, y) → Ψ(x, −y)` on the grid, `j → (ny − j) mod ny`.
    pub fn mirrored_y(&self) -> Self {
        let mut out = self.clone();
        let g = self.geom;
        for (dst, src) in out.components.iter_mut().zip(&self.components) {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    dst[g.index(i, j)] = src[g.index(i, (g.ny - j) % g.ny)];
                }
            }
        }
        out
    }

    /// Largest entry modulus difference to another field on the same grid.
    pub fn max_abs_diff(&self, other: &FieldGrid) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Snapshot with eight real planes: `re c1, im c1, …, re c4, im c4`.
    pub fn to_container(&self, n0: f64, tag: impl Into<String>) -> GridContainer {
        let [dx, dy] = self.geom.spacing();
        let planes = self
            .components
            .iter()
            .flat_map(|p| {
                [
                    p.iter().map(|v| v.re).collect(),
                    p.iter().map(|v| v.im).collect(),
                ]
            })
            .collect();
        GridContainer {
            kind: ContainerKind::FieldSnapshot,
            n0,
            dims: [self.geom.nx as u64, self.geom.ny as u64, 1],
            spacing: [dx, dy, 1.0],
            origin: [self.geom.xs()[0], self.geom.ys()[0], self.z],
            z: self.z,
            tag: tag.into(),
            planes,
        }
    }

    pub fn from_container(cont: &GridContainer, set: MatrixSet) -> Result<Self> {
        cont.validate()?;
        if cont.kind != ContainerKind::FieldSnapshot {
            return Err(Error::Format(
                "container does not hold a field snapshot".into(),
            ));
        }
        let nx = cont.dims[0] as usize;
        let ny = cont.dims[1] as usize;
        let geom = GridGeometry::new(
            nx,
            ny,
            [cont.spacing[0] * nx as f64, cont.spacing[1] * ny as f64],
        )?;
        let mut f = FieldGrid::zeros(geom, set);
        f.z = cont.z;
        for (i, comp) in f.components.iter_mut().enumerate() {
            let (re, im) = (&cont.planes[2 * i], &cont.planes[2 * i + 1]);
            *comp = re
                .iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(*a, *b))
                .collect();
        }
        Ok(f)
    }
}

/// Circularly polarized Gaussian `G = A·exp(−|r − c|²/w²)·exp(ik tilt·(r − c))`
/// with `c1 = −2G`, `c4 = 0` and `c2 = c3 = F_z` fixed by `∇·F = 0` in the
/// transverse Fourier domain. `σ = −1` selects the conjugate matrix set, whose
/// transversality condition carries `p_y → −p_y`.
pub fn init_gaussian_beam(
    spec: &BeamSpec,
    geom: GridGeometry,
    cfg: &PropagationConfig,
) -> Result<FieldGrid> {
    cfg.validate()?;
    if !(spec.waist > 0.0) || !spec.waist.is_finite() {
        return Err(Error::InvalidInput(format!(
            "waist must be positive, got {}",
            spec.waist
        )));
    }
    let [dx, dy] = geom.spacing();
    let cells = spec.waist / dx.max(dy);
    if cells < MIN_CELLS_PER_WAIST {
        return Err(Error::UnderResolved {
            cells_per_waist: cells,
            required: MIN_CELLS_PER_WAIST,
        });
    }
    let available = cfg.band_limit.min(geom.nyquist(cfg.k));
    let needed = spec.tilt.norm() + 5.0 / (cfg.k * spec.waist);
    if needed > available {
        return Err(Error::Bandwidth { needed, available });
    }

    let set = MatrixSet::for_helicity(spec.helicity);
    let s = set.y_sign();
    let (xs, ys) = (geom.xs(), geom.ys());
    let mut g = vec![c(0.0); geom.len()];
    let w2 = spec.waist * spec.waist;
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let d = Vec2::new(x - spec.center.x, y - spec.center.y);
            let phase = cfg.k * spec.tilt.dot(&d);
            g[geom.index(i, j)] =
                Complex64::from_polar(spec.amplitude * (-d.norm_squared() / w2).exp(), phase);
        }
    }

    let mut ffts = Fft2::new(geom);
    let mut gt = g.clone();
    ffts.forward(&mut gt);
    let (px, py) = geom.momenta(cfg.k);
    let norm = 1.0 / geom.len() as f64;
    let mut fz = vec![c(0.0); geom.len()];
    for i in 0..geom.nx {
        for j in 0..geom.ny {
            let p = Vec2::new(px[i], py[j]);
            let idx = geom.index(i, j);
            if let Ok(pz) = fw_energy(p, cfg.n0) {
                // F = (G, iG, F_z): p_x F_x + s p_y F_y + p_z F_z = 0.
                fz[idx] = -(c(p.x) + I * (s * p.y)) * gt[idx] / pz * norm;
            }
        }
    }
    ffts.inverse(&mut fz);

    let mut field = FieldGrid::zeros(geom, set);
    field.carrier_reference = cfg.carrier_reference;
    field.components[0] = g.iter().map(|v| v * -2.0).collect();
    field.components[1] = fz.clone();
    field.components[2] = fz;
    Ok(field)
}

/// `exp(−ik dz K)` with `K = β(−n0 + M⊥·p⊥)`, from `K² = E²`:
/// `cos(k dz E) − i sin(k dz E)/E · K`, optionally times `exp(−ik n0 dz)`.
pub fn kinetic_propagator(
    p_perp: Vec2,
    dz: f64,
    k: f64,
    n0: f64,
    set: &DiracMatrixSet,
    carrier_reference: bool,
) -> Result<Mat4> {
    let e = fw_energy(p_perp, n0)?;
    let kmat = set.beta() * (set.m_perp_dot(p_perp) - Mat4::identity() * c(n0));
    let arg = k * dz * e;
    let mut out = Mat4::identity() * c(arg.cos()) - kmat * (I * (arg.sin() / e));
    if carrier_reference {
        out *= Complex64::from_polar(1.0, -k * n0 * dz);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Circular gap between the forward and backward phase arcs; `≤ 0` means they overlap.
    pub margin: f64,
    /// Per-step forward phases `k dz (E − n0)`, `[min, max]`.
    pub forward_arc: [f64; 2],
    /// Per-step backward phases `−k dz (E + n0)`, `[min, max]`.
    pub backward_arc: [f64; 2],
}

/// Phase-arc separation of the split step over `|p⊥| ≤ p_cut` and
/// `ζ ∈ [zeta_min, zeta_max]`, with `E = √((n0 + ζ)² − p²)`.
pub fn stability_margin(
    k: f64,
    dz: f64,
    n0: f64,
    p_cut: f64,
    zeta: [f64; 2],
) -> Result<StabilityReport> {
    let (zmin, zmax) = (zeta[0].min(zeta[1]), zeta[0].max(zeta[1]));
    if !(n0 + zmin > p_cut) {
        return Err(Error::NonParaxial {
            what: "band limit reaches the local index",
            value: p_cut,
            limit: n0 + zmin,
        });
    }
    // E is monotone in both p and ζ, so the extremes sit on the corners.
    let e_min = ((n0 + zmin).powi(2) - p_cut * p_cut).sqrt();
    let e_max = n0 + zmax;
    let kd = k * dz;
    let forward = [kd * (e_min - n0), kd * (e_max - n0)];
    let backward = [-kd * (e_max + n0), -kd * (e_min + n0)];
    let span = (forward[1] - forward[0]) + (backward[1] - backward[0]);
    let margin = if span >= TAU {
        TAU - span
    } else {
        // Shift the backward arc by every relevant multiple of 2π and keep the tightest gap.
        let centre = 0.5 * (forward[0] + forward[1]) - 0.5 * (backward[0] + backward[1]);
        let m0 = (centre / TAU).round();
        (-2..=2)
            .map(|d| {
                let shift = (m0 + d as f64) * TAU;
                let (b0, b1) = (backward[0] + shift, backward[1] + shift);
                (b0 - forward[1]).max(forward[0] - b1)
            })
            .fold(f64::INFINITY, f64::min)
    };
    Ok(StabilityReport {
        margin,
        forward_arc: forward,
        backward_arc: backward,
    })
}

/// Row/column 2D FFT with cached plans.
struct Fft2 {
    geom: GridGeometry,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(geom: GridGeometry) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            geom,
            row_fwd: planner.plan_fft_forward(geom.ny),
            row_inv: planner.plan_fft_inverse(geom.ny),
            col_fwd: planner.plan_fft_forward(geom.nx),
            col_inv: planner.plan_fft_inverse(geom.nx),
        }
    }

    fn forward(&mut self, data: &mut [Complex64]) {
        let mut scratch = vec![c(0.0); data.len()];
        fft2(data, &mut scratch, self.geom, &self.row_fwd, &self.col_fwd);
    }

    fn inverse(&mut self, data: &mut [Complex64]) {
        let mut scratch = vec![c(0.0); data.len()];
        fft2(data, &mut scratch, self.geom, &self.row_inv, &self.col_inv);
    }
}

/// Unnormalized 2D transform of a row-major `nx × ny` plane.
fn fft2(
    data: &mut [Complex64],
    scratch: &mut [Complex64],
    g: GridGeometry,
    row: &Arc<dyn Fft<f64>>,
    col: &Arc<dyn Fft<f64>>,
) {
    let (nx, ny) = (g.nx, g.ny);
    data.par_chunks_mut(ny).for_each(|r| row.process(r));
    scratch.par_chunks_mut(nx).enumerate().for_each(|(j, out)| {
        for (i, v) in out.iter_mut().enumerate() {
            *v = data[i * ny + j];
        }
    });
    scratch.par_chunks_mut(nx).for_each(|r| col.process(r));
    let scratch = &*scratch;
    data.par_chunks_mut(ny).enumerate().for_each(|(i, out)| {
        for (j, v) in out.iter_mut().enumerate() {
            *v = scratch[j * nx + i];
        }
    });
}

/// Cached per-mode propagators and per-cell phases for one grid and matrix set.
pub struct Propagator {
    geom: GridGeometry,
    cfg: PropagationConfig,
    profile: MediumProfile,
    set: MatrixSet,
    /// Row-major 4×4 per mode, `1/(nx·ny)` folded in; zero above the band limit.
    kinetic: Vec<[Complex64; 16]>,
    /// `exp(+ikζ dz/2)` per cell for z-invariant media.
    static_phase: Option<Vec<Complex64>>,
    mask: Vec<f64>,
    interior: Vec<bool>,
    fft_row: [Arc<dyn Fft<f64>>; 2],
    fft_col: [Arc<dyn Fft<f64>>; 2],
    stability: StabilityReport,
}

impl Propagator {
    pub fn new(
        geom: GridGeometry,
        profile: &MediumProfile,
        cfg: PropagationConfig,
        set: MatrixSet,
    ) -> Result<Self> {
        cfg.validate()?;
        if (profile.n0() - cfg.n0).abs() > 1e-15 * cfg.n0 {
            return Err(Error::InvalidInput(format!(
                "propagation n0 {} differs from the medium's {}",
                cfg.n0,
                profile.n0()
            )));
        }
        let (xs, ys) = (geom.xs(), geom.ys());
        let static_phase = if profile.is_z_invariant() {
            Some(potential_phase(&profile.sample_slice(&xs, &ys, 0.0)?, &cfg))
        } else {
            None
        };
        let zeta_range = match &static_phase {
            Some(_) => {
                let s = profile.sample_slice(&xs, &ys, 0.0)?;
                [
                    s.iter().cloned().fold(f64::INFINITY, f64::min),
                    s.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ]
            }
            None => [-profile.sup_zeta(), profile.sup_zeta()],
        };
        let p_cut = cfg
            .band_limit
            .min(geom.nyquist(cfg.k) * std::f64::consts::SQRT_2);
        let stability = stability_margin(cfg.k, cfg.dz, cfg.n0, p_cut, zeta_range)?;
        if stability.margin <= 0.0 {
            return Err(Error::UnstableStep {
                dz: cfg.dz,
                margin: stability.margin,
            });
        }

        let dirac = DiracMatrixSet::new(set);
        let (px, py) = geom.momenta(cfg.k);
        let norm = c(1.0 / geom.len() as f64);
        let mut kinetic = vec![[c(0.0); 16]; geom.len()];
        for i in 0..geom.nx {
            for j in 0..geom.ny {
                let p = Vec2::new(px[i], py[j]);
                if p.norm() > cfg.band_limit {
                    continue;
                }
                let m =
                    kinetic_propagator(p, cfg.dz, cfg.k, cfg.n0, &dirac, cfg.carrier_reference)?;
                let slot = &mut kinetic[geom.index(i, j)];
                for r in 0..4 {
                    for col in 0..4 {
                        slot[4 * r + col] = m[(r, col)] * norm;
                    }
                }
            }
        }

        let mx = cfg.mask.profile(&xs, geom.extent[0]);
        let my = cfg.mask.profile(&ys, geom.extent[1]);
        let mut mask = vec![1.0; geom.len()];
        let mut interior = vec![false; geom.len()];
        for i in 0..geom.nx {
            for j in 0..geom.ny {
                let idx = geom.index(i, j);
                mask[idx] = mx[i] * my[j];
                interior[idx] = cfg.mask.interior(xs[i], geom.extent[0])
                    && cfg.mask.interior(ys[j], geom.extent[1]);
            }
        }

        let mut planner = FftPlanner::new();
        Ok(Propagator {
            geom,
            cfg,
            profile: profile.clone(),
            set,
            kinetic,
            static_phase,
            mask,
            interior,
            fft_row: [
                planner.plan_fft_forward(geom.ny),
                planner.plan_fft_inverse(geom.ny),
            ],
            fft_col: [
                planner.plan_fft_forward(geom.nx),
                planner.plan_fft_inverse(geom.nx),
            ],
            stability,
        })
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.cfg
    }

    pub fn stability(&self) -> &StabilityReport {
        &self.stability
    }

    /// True where the mask is exactly one.
    pub fn interior(&self) -> &[bool] {
        &self.interior
    }

    fn phase_at(&self, z: f64) -> Result<Vec<Complex64>> {
        match &self.static_phase {
            Some(p) => Ok(p.clone()),
            None => {
                let slice = self
                    .profile
                    .sample_slice(&self.geom.xs(), &self.geom.ys(), z)?;
                Ok(potential_phase(&slice, &self.cfg))
            }
        }
    }

    fn apply_potential(&self, field: &mut FieldGrid, phase: &[Complex64]) {
        for (ci, comp) in field.components.iter_mut().enumerate() {
            let upper = ci < 2;
            comp.par_iter_mut()
                .zip(phase.par_iter())
                .for_each(|(v, ph)| {
                    *v *= if upper { *ph } else { ph.conj() };
                });
        }
    }

    fn transform(&self, field: &mut FieldGrid, dir: usize) {
        let geom = self.geom;
        let (row, col) = (&self.fft_row[dir], &self.fft_col[dir]);
        field.components.par_iter_mut().for_each(|comp| {
            let mut scratch = vec![c(0.0); comp.len()];
            fft2(comp, &mut scratch, geom, row, col);
        });
    }

    fn apply_kinetic(&self, field: &mut FieldGrid) {
        let [c0, c1, c2, c3] = &mut field.components;
        c0.par_iter_mut()
            .zip(c1.par_iter_mut())
            .zip(c2.par_iter_mut())
            .zip(c3.par_iter_mut())
            .zip(self.kinetic.par_iter())
            .for_each(|((((a, b), cc), d), m)| {
                let v = [*a, *b, *cc, *d];
                let row = |r: usize| {
                    m[4 * r] * v[0]
                        + m[4 * r + 1] * v[1]
                        + m[4 * r + 2] * v[2]
                        + m[4 * r + 3] * v[3]
                };
                *a = row(0);
                *b = row(1);
                *cc = row(2);
                *d = row(3);
            });
    }

    fn apply_mask(&self, field: &mut FieldGrid) {
        let area = self.geom.cell_area();
        let mut removed = 0.0;
        for comp in field.components.iter_mut() {
            let lost: Vec<f64> = comp
                .par_chunks_mut(self.geom.ny)
                .zip(self.mask.par_chunks(self.geom.ny))
                .map(|(row, m)| {
                    let mut acc = 0.0;
                    for (v, &w) in row.iter_mut().zip(m) {
                        if w < 1.0 {
                            let before = v.norm_sqr();
                            *v *= w;
                            acc += before - v.norm_sqr();
                        }
                    }
                    acc
                })
                .collect();
            removed += lost.iter().sum::<f64>();
        }
        field.absorbed += removed * area;
    }

    /// One Strang step from `field.z` to `field.z + dz`.
    pub fn step(&self, field: &mut FieldGrid) -> Result<()> {
        if field.geom != self.geom || field.set != self.set {
            return Err(Error::InvalidInput(
                "field grid or matrix set does not match the propagator".into(),
            ));
        }
        let z = field.z;
        let dz = self.cfg.dz;
        let first = self.phase_at(z)?;
        self.apply_potential(field, &first);
        self.transform(field, 0);
        self.apply_kinetic(field);
        self.transform(field, 1);
        let second = match self.static_phase {
            Some(_) => first,
            None => self.phase_at(z + dz)?,
        };
        self.apply_potential(field, &second);
        self.apply_mask(field);
        if !field.is_finite() {
            return Err(Error::NanDetected { last_good_z: z });
        }
        field.z = z + dz;
        Ok(())
    }

    /// Intensity-weighted mean position of one component over the mask interior.
    pub fn centroid(&self, field: &FieldGrid, helicity: Helicity) -> Result<Vec2> {
        centroid_in(field, field.component_for(helicity), Some(&self.interior))
    }
}

fn potential_phase(zeta: &[f64], cfg: &PropagationConfig) -> Vec<Complex64> {
    zeta.iter()
        .map(|z| Complex64::from_polar(1.0, 0.5 * cfg.k * z * cfg.dz))
        .collect()
}

/// Relative energy below which a component's centroid is undefined.
pub const CENTROID_THRESHOLD: f64 = 1e-12;

/// Intensity-weighted mean position of the helicity's component over the
/// interior of the default 10% mask.
pub fn centroid(field: &FieldGrid, helicity: Helicity) -> Result<Vec2> {
    let mask = MaskSpec::default();
    let (xs, ys) = (field.geom.xs(), field.geom.ys());
    let g = field.geom;
    let mut interior = vec![false; g.len()];
    for i in 0..g.nx {
        for j in 0..g.ny {
            interior[g.index(i, j)] =
                mask.interior(xs[i], g.extent[0]) && mask.interior(ys[j], g.extent[1]);
        }
    }
    centroid_in(field, field.component_for(helicity), Some(&interior))
}

/// Fixed-order summation so the result does not depend on thread count.
fn centroid_in(field: &FieldGrid, component: usize, interior: Option<&[bool]>) -> Result<Vec2> {
    let g = field.geom;
    let (xs, ys) = (g.xs(), g.ys());
    let comp = &field.components[component];
    let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let idx = g.index(i, j);
            if interior.is_some_and(|m| !m[idx]) {
                continue;
            }
            let v = comp[idx].norm_sqr();
            w += v;
            sx += v * xs[i];
            sy += v * ys[j];
        }
    }
    let total: f64 = field
        .components
        .iter()
        .flat_map(|p| p.iter().map(|v| v.norm_sqr()))
        .sum();
    let threshold = CENTROID_THRESHOLD * total;
    if !(w > threshold) || w == 0.0 {
        return Err(Error::UndefinedCentroid {
            energy: w * g.cell_area(),
            threshold: threshold * g.cell_area(),
        });
    }
    Ok(Vec2::new(sx / w, sy / w))
}

/// Spectrum-weighted mean transverse momentum of the helicity's component.
pub fn momentum_centroid(field: &FieldGrid, helicity: Helicity, k: f64) -> Result<Vec2> {
    let g = field.geom;
    let mut spec = field.components[field.component_for(helicity)].clone();
    let mut ffts = Fft2::new(g);
    ffts.forward(&mut spec);
    let (px, py) = g.momenta(k);
    let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let v = spec[g.index(i, j)].norm_sqr();
            w += v;
            sx += v * px[i];
            sy += v * py[j];
        }
    }
    if !(w > 0.0) {
        return Err(Error::UndefinedCentroid {
            energy: 0.0,
            threshold: 0.0,
        });
    }
    Ok(Vec2::new(sx / w, sy / w))
}

/// One row of a single-run probe series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioProbe {
    pub z: f64,
    /// Centroid of the dominant component (`c1`); `None` if its energy vanished.
    pub centroid: Option<Vec2>,
    /// Centroid of the minor component (`c4`).
    pub centroid_minor: Option<Vec2>,
    pub energy: f64,
    pub energy_minor: f64,
    pub beta_norm: f64,
    pub l2_norm: f64,
    pub absorbed_energy: f64,
    /// `arg Σ c1`
    pub mean_phase: f64,
}

fn scenario_probe(prop: &Propagator, field: &FieldGrid) -> ScenarioProbe {
    ScenarioProbe {
        z: field.z,
        centroid: centroid_in(field, 0, Some(&prop.interior)).ok(),
        centroid_minor: centroid_in(field, 3, Some(&prop.interior)).ok(),
        energy: field.component_energy(0),
        energy_minor: field.component_energy(3),
        beta_norm: field.beta_norm(),
        l2_norm: field.l2_norm(),
        absorbed_energy: field.absorbed,
        mean_phase: field.mean_phase(0),
    }
}

/// Number of `dz` steps that land on `z_end` exactly.
pub fn step_count(z_end: f64, dz: f64) -> Result<usize> {
    if !(z_end >= 0.0) || !z_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "z_end must be non-negative, got {z_end}"
        )));
    }
    let n = (z_end / dz).round();
    if (n * dz - z_end).abs() > 1e-9 * z_end.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "z_end {z_end} is not a whole number of steps dz = {dz}"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub probes: Vec<ScenarioProbe>,
    pub field: FieldGrid,
    pub stability: StabilityReport,
}

/// Marches one beam to `z_end`, probing at `z = 0` and every `probe_every` steps
/// (always including the final plane).
pub fn run_scenario(
    profile: &MediumProfile,
    spec: &BeamSpec,
    geom: GridGeometry,
    cfg: PropagationConfig,
    z_end: f64,
    probe_every: usize,
) -> Result<ScenarioRun> {
    let steps = step_count(z_end, cfg.dz)?;
    let mut field = init_gaussian_beam(spec, geom, &cfg)?;
    let prop = Propagator::new(geom, profile, cfg, field.set)?;
    let every = probe_every.max(1);
    let mut probes = vec![scenario_probe(&prop, &field)];
    for s in 1..=steps {
        prop.step(&mut field)?;
        if s % every == 0 || s == steps {
            probes.push(scenario_probe(&prop, &field));
        }
    }
    Ok(ScenarioRun {
        probes,
        field,
        stability: prop.stability,
    })
}

/// One row of the paired-run probe series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub z: f64,
    pub cx_plus: f64,
    pub cy_plus: f64,
    pub cx_minus: f64,
    pub cy_minus: f64,
    pub energy_plus: f64,
    pub energy_minus: f64,
    /// Sum over both runs.
    pub beta_norm: f64,
    /// Sum over both runs.
    pub absorbed_energy: f64,
    /// `arg Σ c1_A·conj(c1_B)`: relative phase of the two helicity runs.
    pub phase_plus: f64,
}

impl ProbeRecord {
    pub const CSV_COLUMNS: &'static str =
        "z,cx_plus,cy_plus,cx_minus,cy_minus,energy_plus,energy_minus,beta_norm,absorbed_energy,phase_plus";

    pub fn csv_row(&self) -> String {
        [
            self.z,
            self.cx_plus,
            self.cy_plus,
            self.cx_minus,
            self.cy_minus,
            self.energy_plus,
            self.energy_minus,
            self.beta_norm,
            self.absorbed_energy,
            self.phase_plus,
        ]
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("bad probe row {line:?}: {e}")))?;
        if v.len() != 10 {
            return Err(Error::Format(format!(
                "probe row needs 10 columns, got {}",
                v.len()
            )));
        }
        Ok(ProbeRecord {
            z: v[0],
            cx_plus: v[1],
            cy_plus: v[2],
            cx_minus: v[3],
            cy_minus: v[4],
            energy_plus: v[5],
            energy_minus: v[6],
            beta_norm: v[7],
            absorbed_energy: v[8],
            phase_plus: v[9],
        })
    }
}

#[derive(Debug, Clone)]
pub struct PairRun {
    pub probes: Vec<ProbeRecord>,
    /// σ = +1 on the standard set.
    pub plus: FieldGrid,
    /// σ = −1 on the conjugate set.
    pub minus: FieldGrid,
    pub stability: StabilityReport,
    /// Fields captured at the requested snapshot planes, `(plus, minus)`.
    pub snapshots: Vec<(FieldGrid, FieldGrid)>,
}

/// Both helicity runs from one launch, advanced in lockstep.
pub struct PairSimulation {
    pub plus: FieldGrid,
    pub minus: FieldGrid,
    prop_plus: Propagator,
    prop_minus: Propagator,
    steps_taken: usize,
}

impl PairSimulation {
    /// σ = +1 on the standard set and σ = −1 on the conjugate set, same envelope, centre and tilt.
    pub fn new(
        profile: &MediumProfile,
        spec: &BeamSpec,
        geom: GridGeometry,
        cfg: PropagationConfig,
    ) -> Result<Self> {
        let plus = init_gaussian_beam(
            &BeamSpec {
                helicity: Helicity::Plus,
                ..*spec
            },
            geom,
            &cfg,
        )?;
        let minus = init_gaussian_beam(
            &BeamSpec {
                helicity: Helicity::Minus,
                ..*spec
            },
            geom,
            &cfg,
        )?;
        let prop_plus = Propagator::new(geom, profile, cfg, plus.set)?;
        let prop_minus = Propagator::new(geom, profile, cfg, minus.set)?;
        Ok(PairSimulation {
            plus,
            minus,
            prop_plus,
            prop_minus,
            steps_taken: 0,
        })
    }

    pub fn stability(&self) -> &StabilityReport {
        &self.prop_plus.stability
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn z(&self) -> f64 {
        self.plus.z
    }

    pub fn advance(&mut self) -> Result<()> {
        let (pa, pb) = (&self.prop_plus, &self.prop_minus);
        let (a, b) = (&mut self.plus, &mut self.minus);
        let (ra, rb) = rayon::join(|| pa.step(a), || pb.step(b));
        ra?;
        rb?;
        self.steps_taken += 1;
        Ok(())
    }

    pub fn probe(&self) -> Result<ProbeRecord> {
        pair_probe(&self.prop_plus, &self.plus, &self.minus)
    }
}

/// Runs σ = +1 (standard set) and σ = −1 (conjugate set) from the same launch.
///
/// `snapshot_every`, if set, captures both fields every that many steps.
pub fn run_pair(
    profile: &MediumProfile,
    spec: &BeamSpec,
    geom: GridGeometry,
    cfg: PropagationConfig,
    z_end: f64,
    probe_every: usize,
    snapshot_every: Option<usize>,
) -> Result<PairRun> {
    let steps = step_count(z_end, cfg.dz)?;
    let mut sim = PairSimulation::new(profile, spec, geom, cfg)?;
    let every = probe_every.max(1);
    let mut probes = vec![sim.probe()?];
    let mut snapshots = Vec::new();
    for s in 1..=steps {
        sim.advance()?;
        if s % every == 0 || s == steps {
            probes.push(sim.probe()?);
        }
        if snapshot_every.is_some_and(|n| n > 0 && s % n == 0) {
            snapshots.push((sim.plus.clone(), sim.minus.clone()));
        }
    }
    Ok(PairRun {
        probes,
        stability: *sim.stability(),
        plus: sim.plus,
        minus: sim.minus,
        snapshots,
    })
}

fn pair_probe(prop: &Propagator, a: &FieldGrid, b: &FieldGrid) -> Result<ProbeRecord> {
    let ca = prop.centroid(a, Helicity::Plus)?;
    let cb = centroid_in(b, b.component_for(Helicity::Minus), Some(&prop.interior))?;
    let ia = a.component_for(Helicity::Plus);
    let ib = b.component_for(Helicity::Minus);
    let overlap: Complex64 = a.components[ia]
        .iter()
        .zip(&b.components[ib])
        .map(|(x, y)| x * y.conj())
        .sum();
    Ok(ProbeRecord {
        z: a.z,
        cx_plus: ca.x,
        cy_plus: ca.y,
        cx_minus: cb.x,
        cy_minus: cb.y,
        energy_plus: a.component_energy(ia),
        energy_minus: b.component_energy(ib),
        beta_norm: a.beta_norm() + b.beta_norm(),
        absorbed_energy: a.absorbed + b.absorbed,
        phase_plus: overlap.arg(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RytovSeries {
    pub z: Vec<f64>,
    /// Half the unwrapped relative phase of the two helicity runs.
    pub rotation: Vec<f64>,
    /// Indices of probes whose raw phase jump exceeded π/2.
    pub ambiguous: Vec<usize>,
}

impl RytovSeries {
    pub fn final_rotation(&self) -> f64 {
        *self.rotation.last().unwrap_or(&0.0)
    }
}

/// `½·unwrap(arg Σ c1_A·conj(c1_B))`; the common dynamical phase cancels.
pub fn rytov_measurement(probes: &[ProbeRecord]) -> RytovSeries {
    let mut rotation = Vec::with_capacity(probes.len());
    let mut ambiguous = Vec::new();
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    for (i, p) in probes.iter().enumerate() {
        if let Some(q) = prev {
            let raw = p.phase_plus - q;
            let d = raw - TAU * ((raw + PI) / TAU).floor();
            if d.abs() > PI / 2.0 {
                ambiguous.push(i);
            }
            acc += d;
        } else {
            acc = p.phase_plus;
        }
        prev = Some(p.phase_plus);
        rotation.push(0.5 * acc);
    }
    let start = rotation.first().copied().unwrap_or(0.0);
    RytovSeries {
        z: probes.iter().map(|p| p.z).collect(),
        rotation: rotation.into_iter().map(|r| r - start).collect(),
        ambiguous,
    }
}

/// Bytes held by a paired run: two fields, two propagators and FFT scratch.
pub fn pair_memory_estimate(geom: GridGeometry) -> usize {
    let cell = std::mem::size_of::<Complex64>();
    let n = geom.len();
    // per run: 4 planes + 4 scratch + 16 kinetic entries + 2 phase planes + mask/interior
    2 * n * (cell * (4 + 4 + 16 + 2) + 9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::build_matrices;
    use crate::fw::fw_matrix;
    use crate::linalg::max_abs;
    use crate::medium::{Bounds, MediumKind};
    use nalgebra::Vector4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn expm_oracle(m: &Mat4) -> Mat4 {
        m.exp()
    }

    #[test]
    fn propagator_on_axis_is_block_phase() {
        let set = build_matrices(false);
        let (k, dz, n0) = (50.0, 0.03, 1.2);
        let p = kinetic_propagator(Vec2::zeros(), dz, k, n0, &set, false).unwrap();
        let expected = (set.beta() * (I * (k * dz * n0))).exp();
        assert!(max_abs(&(p - expected)) < 1e-14);
        assert!((p[(0, 0)] - Complex64::from_polar(1.0, k * dz * n0)).norm() < 1e-14);
        assert!((p[(3, 3)] - Complex64::from_polar(1.0, -k * dz * n0)).norm() < 1e-14);
    }

    #[test]
    fn propagator_matches_matrix_exponential() {
        for conj in [false, true] {
            let set = build_matrices(conj);
            let p_perp = Vec2::new(0.12, -0.07);
            let (k, dz, n0) = (200.0, 0.02, 1.0);
            let kmat = set.beta() * (set.m_perp_dot(p_perp) - Mat4::identity() * c(n0));
            let oracle = expm_oracle(&(kmat * (-I * (k * dz))));
            let p = kinetic_propagator(p_perp, dz, k, n0, &set, false).unwrap();
            assert!(max_abs(&(p - oracle)) <= 1e-12);
        }
    }

    #[test]
    fn propagator_random_modes_and_pseudo_unitarity() {
        let set = build_matrices(false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = Vec2::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
            let (k, dz) = (rng.random_range(10.0..300.0), rng.random_range(0.001..0.05));
            let kmat = set.beta() * (set.m_perp_dot(p) - Mat4::identity());
            let oracle = expm_oracle(&(kmat * (-I * (k * dz))));
            let m = kinetic_propagator(p, dz, k, 1.0, &set, false).unwrap();
            assert!(max_abs(&(m - oracle)) <= 1e-12);
            let carrier = kinetic_propagator(p, dz, k, 1.0, &set, true).unwrap();
            assert!(max_abs(&(carrier.adjoint() * set.beta() * carrier - set.beta())) <= 1e-13);
        }
    }

    #[test]
    fn forward_eigenmode_gains_reduced_phase() {
        let set = build_matrices(false);
        let p = Vec2::new(0.05, -0.03);
        let (k, dz, n0) = (200.0, 3.0 * PI / 400.0, 1.0);
        let fw = fw_matrix(p, n0, &set).unwrap();
        let v = fw.matrix * Vector4::new(c(1.0), c(0.0), c(0.0), c(0.0));
        let out = kinetic_propagator(p, dz, k, n0, &set, true).unwrap() * v;
        let expect = Complex64::from_polar(1.0, k * (fw.energy - n0) * dz);
        for i in 0..4 {
            if v[i].norm() > 1e-12 {
                assert!((out[i] / v[i] - expect).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn stability_margin_cases() {
        let k = 200.0;
        let zr = [-0.04, 0.04];
        let good = stability_margin(k, 3.0 * PI / (2.0 * k), 1.0, 0.45, zr).unwrap();
        assert!(good.margin > 1.0, "{good:?}");
        let ok = stability_margin(k, 0.02, 1.0, 0.45, zr).unwrap();
        assert!(ok.margin > 0.0);
        let bad = stability_margin(k, 0.0157, 1.0, 0.45, zr).unwrap();
        assert!(bad.margin <= 0.0, "{bad:?}");
        let wide = stability_margin(k, 0.02, 1.0, 0.7, zr).unwrap();
        assert!(wide.margin <= 0.0);
    }

    fn small_geom() -> GridGeometry {
        GridGeometry::square(64, 3.2).unwrap()
    }

    #[test]
    fn init_untilted_beam() {
        let geom = GridGeometry::square(128, 4.0).unwrap();
        let cfg = PropagationConfig::new(200.0, 1.0, 0.02);
        let spec = BeamSpec::new(0.5, Helicity::Plus);
        let f = init_gaussian_beam(&spec, geom, &cfg).unwrap();
        assert!(f.components[3].iter().all(|v| *v == c(0.0)));
        let transverse = f.component_energy(0) + f.component_energy(3);
        let longitudinal = f.component_energy(1);
        let ratio = longitudinal / transverse;
        // Scale (1/(k w n0))² = 1e-4, with an O(1) prefactor.
        assert!(ratio > 1e-6 && ratio < 1e-3, "{ratio}");
        let cen = centroid(&f, Helicity::Plus).unwrap();
        assert!(cen.norm() <= 1e-3 * 0.5);
        assert!(matches!(
            centroid(&f, Helicity::Minus),
            Err(Error::UndefinedCentroid { .. })
        ));
    }

    #[test]
    fn init_shifted_centroid() {
        let geom = GridGeometry::square(128, 4.0).unwrap();
        let cfg = PropagationConfig::new(200.0, 1.0, 0.02);
        let spec = BeamSpec {
            center: Vec2::new(0.3, 0.0),
            ..BeamSpec::new(0.3, Helicity::Plus)
        };
        let cen = centroid(
            &init_gaussian_beam(&spec, geom, &cfg).unwrap(),
            Helicity::Plus,
        )
        .unwrap();
        assert!((cen - Vec2::new(0.3, 0.0)).norm() <= 1e-3 * 0.3);
    }

    #[test]
    fn init_is_transverse_in_fourier_space() {
        for h in [Helicity::Plus, Helicity::Minus] {
            let geom = small_geom();
            let cfg = PropagationConfig::new(100.0, 1.0, 0.02);
            let spec = BeamSpec {
                tilt: Vec2::new(0.05, -0.08),
                ..BeamSpec::new(0.5, h)
            };
            let f = init_gaussian_beam(&spec, geom, &cfg).unwrap();
            let s = f.set.y_sign();
            let mut planes = f.components.clone();
            let mut ffts = Fft2::new(geom);
            for p in planes.iter_mut() {
                ffts.forward(p);
            }
            let (px, py) = geom.momenta(cfg.k);
            let mut worst: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..geom.nx {
                for j in 0..geom.ny {
                    let idx = geom.index(i, j);
                    // F_x = −c1/2, F_y = −c1/(2i), F_z = c2 since c4 = 0.
                    let fx = planes[0][idx] * -0.5;
                    let fy = planes[0][idx] * (-I * 0.5);
                    let fz = planes[1][idx];
                    let pz = (1.0 - px[i] * px[i] - py[j] * py[j]).sqrt();
                    worst = worst.max((fx * px[i] + fy * (s * py[j]) + fz * pz).norm());
                    scale = scale.max(fx.norm());
                }
            }
            assert!(worst <= 1e-12 * scale, "{worst} {scale}");
        }
    }

    #[test]
    fn init_guards() {
        let cfg = PropagationConfig::new(200.0, 1.0, 0.02);
        let coarse = GridGeometry::square(32, 8.0).unwrap();
        assert!(matches!(
            init_gaussian_beam(&BeamSpec::new(0.5, Helicity::Plus), coarse, &cfg),
            Err(Error::UnderResolved { .. })
        ));
        let geom = GridGeometry::square(256, 8.0).unwrap();
        let spec = BeamSpec {
            tilt: Vec2::new(0.44, 0.0),
            ..BeamSpec::new(0.5, Helicity::Plus)
        };
        assert!(matches!(
            init_gaussian_beam(&spec, geom, &cfg),
            Err(Error::Bandwidth { .. })
        ));
    }

    #[test]
    fn sub_grid_shift_is_resolved() {
        let geom = small_geom();
        let dx = geom.spacing()[0];
        let shift = 0.01 * dx;
        let mut f = FieldGrid::zeros(geom, MatrixSet::Standard);
        let (xs, ys) = (geom.xs(), geom.ys());
        for i in 0..geom.nx {
            for j in 0..geom.ny {
                let r2 = (xs[i] - shift).powi(2) + ys[j].powi(2);
                f.components[0][geom.index(i, j)] = c((-r2 / 0.25).exp());
            }
        }
        let cen = centroid(&f, Helicity::Plus).unwrap();
        assert!((cen.x - shift).abs() <= 0.1 * shift, "{} {shift}", cen.x);
    }

    fn homogeneous() -> MediumProfile {
        MediumProfile::homogeneous(1.0).unwrap()
    }

    #[test]
    fn homogeneous_conserves_beta_norm() {
        let geom = small_geom();
        let mut cfg = PropagationConfig::new(100.0, 1.0, 3.0 * PI / 200.0);
        cfg.mask.fraction = 0.0;
        let spec = BeamSpec {
            tilt: Vec2::new(0.05, 0.02),
            ..BeamSpec::new(0.4, Helicity::Plus)
        };
        let run = run_scenario(&homogeneous(), &spec, geom, cfg, 1000.0 * cfg.dz, 100).unwrap();
        let b0 = run.probes[0].beta_norm;
        for p in &run.probes {
            assert!(
                ((p.beta_norm - b0) / b0).abs() <= 1e-9,
                "{} {b0}",
                p.beta_norm
            );
        }
    }

    #[test]
    fn homogeneous_untilted_stays_centred() {
        // Wide enough that the unpaired edge row x = −L/2 stays dark.
        let geom = GridGeometry::square(128, 6.4).unwrap();
        let cfg = PropagationConfig::new(100.0, 1.0, 3.0 * PI / 200.0);
        let spec = BeamSpec::new(0.4, Helicity::Minus);
        let run = run_scenario(&homogeneous(), &spec, geom, cfg, 200.0 * cfg.dz, 20).unwrap();
        for p in &run.probes {
            let cen = p.centroid.unwrap();
            assert!(cen.norm() < 1e-12, "{cen:?}");
        }
    }

    #[test]
    fn mirror_symmetry_of_conjugate_evolution() {
        // y = −L/2 has no mirror partner, so the launch must vanish there.
        let geom = GridGeometry::square(128, 3.2).unwrap();
        let profile = MediumProfile::new(
            1.0,
            MediumKind::LinearGradient {
                g: Vec2::new(0.01, 0.0),
            },
            Bounds::transverse(2.0).unwrap(),
        )
        .unwrap();
        let cfg = PropagationConfig::new(100.0, 1.0, 0.03);
        let spec = BeamSpec {
            center: Vec2::new(0.1, 0.0),
            tilt: Vec2::new(-0.03, 0.05),
            ..BeamSpec::new(0.25, Helicity::Plus)
        };
        let mut a = init_gaussian_beam(&spec, geom, &cfg).unwrap();
        let mirrored = BeamSpec {
            helicity: Helicity::Minus,
            ..spec.mirrored_y()
        };
        let mut b = init_gaussian_beam(&mirrored, geom, &cfg).unwrap();
        let d0 = b.max_abs_diff(&a.mirrored_y());
        assert!(d0 < 1e-12, "{d0}");
        let pa = Propagator::new(geom, &profile, cfg, a.set).unwrap();
        let pb = Propagator::new(geom, &profile, cfg, b.set).unwrap();
        for _ in 0..60 {
            pa.step(&mut a).unwrap();
            pb.step(&mut b).unwrap();
        }
        assert!(b.max_abs_diff(&a.mirrored_y()) <= 1e-10);
    }

    #[test]
    fn helicities_split_out_of_plane() {
        let geom = GridGeometry::square(128, 4.0).unwrap();
        let profile = MediumProfile::new(
            1.0,
            MediumKind::LinearGradient {
                g: Vec2::new(0.02, 0.0),
            },
            Bounds::transverse(2.0).unwrap(),
        )
        .unwrap();
        let cfg = PropagationConfig::new(200.0, 1.0, 3.0 * PI / 400.0);
        let spec = BeamSpec::new(0.5, Helicity::Plus);
        let run = run_pair(&profile, &spec, geom, cfg, 200.0 * cfg.dz, 50, None).unwrap();
        let last = run.probes.last().unwrap();
        assert!(last.cy_plus.abs() > 1e-7);
        assert!((last.cy_plus + last.cy_minus).abs() < 1e-10 * last.cy_plus.abs().max(1e-6));
        assert!((last.cx_plus - last.cx_minus).abs() < 1e-12);
    }

    #[test]
    fn strang_step_is_second_order() {
        let geom = small_geom();
        let profile = MediumProfile::new(
            1.0,
            MediumKind::ParabolicGrin {
                alpha: 0.1,
                center: Vec2::zeros(),
            },
            Bounds::transverse(2.0).unwrap(),
        )
        .unwrap();
        let spec = BeamSpec {
            center: Vec2::new(0.3, 0.0),
            tilt: Vec2::new(0.0, 0.03),
            ..BeamSpec::new(0.4, Helicity::Plus)
        };
        let z_end = 1.2;
        let run = |dz: f64| {
            let mut cfg = PropagationConfig::new(60.0, 1.0, dz);
            cfg.mask.fraction = 0.0;
            run_scenario(&profile, &spec, geom, cfg, z_end, 1_000_000)
                .unwrap()
                .field
        };
        let (a, b, cc) = (run(0.04), run(0.02), run(0.01));
        let ratio = a.max_abs_diff(&b) / b.max_abs_diff(&cc);
        assert!(ratio > 3.5, "ratio {ratio}");
    }

    #[test]
    fn unstable_step_is_refused() {
        let geom = GridGeometry::square(256, 8.0).unwrap();
        let mut cfg = PropagationConfig::new(200.0, 1.0, 0.016);
        assert!(matches!(
            Propagator::new(geom, &homogeneous(), cfg, MatrixSet::Standard),
            Err(Error::UnstableStep { .. })
        ));
        cfg.dz = 3.0 * PI / 400.0;
        assert!(Propagator::new(geom, &homogeneous(), cfg, MatrixSet::Standard).is_ok());
    }

    #[test]
    fn rytov_measurement_unwraps_and_flags() {
        let mk = |z: f64, ph: f64| ProbeRecord {
            z,
            cx_plus: 0.0,
            cy_plus: 0.0,
            cx_minus: 0.0,
            cy_minus: 0.0,
            energy_plus: 1.0,
            energy_minus: 1.0,
            beta_norm: 2.0,
            absorbed_energy: 0.0,
            phase_plus: ph,
        };
        let phases = [3.0, -3.1, -2.9, 3.1];
        let probes: Vec<_> = phases
            .iter()
            .enumerate()
            .map(|(i, p)| mk(i as f64, *p))
            .collect();
        let r = rytov_measurement(&probes);
        assert_eq!(r.rotation[0], 0.0);
        let expect = 0.5 * (TAU - 6.1);
        assert!((r.rotation[1] - expect).abs() < 1e-12);
        assert!(r.ambiguous.is_empty());
        let jumpy = [mk(0.0, 0.0), mk(1.0, 2.0)];
        assert_eq!(rytov_measurement(&jumpy).ambiguous, vec![1]);
        let flat: Vec<_> = (0..5).map(|i| mk(i as f64, 0.7)).collect();
        assert!(rytov_measurement(&flat).rotation.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn probe_csv_round_trip() {
        let p = ProbeRecord {
            z: 1.5,
            cx_plus: -1e-5,
            cy_plus: 3.25e-7,
            cx_minus: -1e-5,
            cy_minus: -3.25e-7,
            energy_plus: 1.0 / 3.0,
            energy_minus: 0.25,
            beta_norm: 2.0,
            absorbed_energy: 1e-20,
            phase_plus: -0.1,
        };
        assert_eq!(ProbeRecord::parse_csv_row(&p.csv_row()).unwrap(), p);
        assert!(ProbeRecord::parse_csv_row("1,2,3").is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let geom = small_geom();
        let cfg = PropagationConfig::new(100.0, 1.0, 0.02);
        let mut f = init_gaussian_beam(&BeamSpec::new(0.4, Helicity::Minus), geom, &cfg).unwrap();
        f.z = 0.75;
        let cont = f.to_container(1.0, "test");
        let mut bytes = Vec::new();
        cont.write_to(&mut bytes).unwrap();
        let back =
            FieldGrid::from_container(&GridContainer::read_from(bytes.as_slice()).unwrap(), f.set)
                .unwrap();
        assert_eq!(back.components, f.components);
        assert_eq!(back.z, 0.75);
        assert_eq!(back.geom, f.geom);
    }
}
