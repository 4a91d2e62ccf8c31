//! Refractive-index models `n(x) = n0 + ζ(x)` and their gradients.

use crate::{Error, Result, Vec2, Vec3};

/// Default cap on `sup|ζ|` relative to `n0`.
pub const WEAKNESS_BOUND: f64 = 0.1;

/// Axis-aligned domain; infinite limits are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|i| min[i].is_nan() || max[i].is_nan() || !(min[i] < max[i])) {
            return Err(Error::InvalidInput(format!(
                "bounds need min < max on every axis, got {min:?} .. {max:?}"
            )));
        }
        Ok(Bounds { min, max })
    }

    pub fn unbounded() -> Self {
        Bounds {
            min: Vec3::repeat(f64::NEG_INFINITY),
            max: Vec3::repeat(f64::INFINITY),
        }
    }

    /// Transverse box `[-half, half]²` with unbounded `z`.
    pub fn transverse(half: f64) -> Result<Self> {
        Bounds::new(
            Vec3::new(-half, -half, f64::NEG_INFINITY),
            Vec3::new(half, half, f64::INFINITY),
        )
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] && x[i] <= self.max[i])
    }

    /// Reports the first violated axis.
    pub fn check(&self, x: &Vec3) -> Result<()> {
        for (i, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
            if !(x[i] >= self.min[i] && x[i] <= self.max[i]) {
                return Err(Error::OutOfDomain {
                    axis,
                    value: x[i],
                    min: self.min[i],
                    max: self.max[i],
                });
            }
        }
        Ok(())
    }

    fn transverse_is_finite(&self) -> bool {
        (0..2).all(|i| self.min[i].is_finite() && self.max[i].is_finite())
    }
}

/// Uniformly sampled `ζ`, row-major with `z` fastest: `(ix·ny + iy)·nz + iz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub zeta: Vec<f64>,
}

impl SampledField {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        zeta: Vec<f64>,
    ) -> Result<Self> {
        let count: usize = dims.iter().product();
        if zeta.len() != count {
            return Err(Error::InvalidInput(format!(
                "sample count {} does not match dims {dims:?}",
                zeta.len()
            )));
        }
        if spacing.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if zeta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gridded samples"));
        }
        Ok(SampledField {
            dims,
            spacing,
            origin,
            zeta,
        })
    }

    /// Samples `f(x, y, z)` on the lattice.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        f: impl Fn(Vec3) -> f64,
    ) -> Result<Self> {
        let mut zeta = Vec::with_capacity(dims.iter().product());
        for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    zeta.push(f(Vec3::new(
                        origin[0] + ix as f64 * spacing[0],
                        origin[1] + iy as f64 * spacing[1],
                        origin[2] + iz as f64 * spacing[2],
                    )));
                }
            }
        }
        SampledField::new(dims, spacing, origin, zeta)
    }

    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.zeta[(ix * self.dims[1] + iy) * self.dims[2] + iz]
    }

    fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + (self.dims[axis] - 1) as f64 * self.spacing[axis]
    }

    /// Cell index and fractional offset along one axis; nodes map to `t = 0`
    /// (or `t = 1` on the last node) so interpolation returns samples exactly.
    fn locate(&self, axis: usize, x: f64) -> (usize, f64) {
        let n = self.dims[axis];
        if n == 1 {
            return (0, 0.0);
        }
        let s = (x - self.origin[axis]) / self.spacing[axis];
        let nearest = s.round();
        let s = if (s - nearest).abs() < 1e-9 {
            nearest
        } else {
            s
        };
        let cell = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        (cell, (s - cell as f64).clamp(0.0, 1.0))
    }

    fn interpolate(&self, x: &Vec3) -> f64 {
        let (i, tx) = self.locate(0, x[0]);
        let (j, ty) = self.locate(1, x[1]);
        let (l, tz) = self.locate(2, x[2]);
        let step = |axis: usize, i: usize| if self.dims[axis] > 1 { i + 1 } else { i };
        let lerp = |a: f64, b: f64, t: f64| (1.0 - t) * a + t * b;
        let plane = |l: usize| {
            let lo = lerp(self.value(i, j, l), self.value(i, step(1, j), l), ty);
            let hi = lerp(
                self.value(step(0, i), j, l),
                self.value(step(0, i), step(1, j), l),
                ty,
            );
            lerp(lo, hi, tx)
        };
        lerp(plane(l), plane(step(2, l)), tz)
    }

    fn sup_abs(&self) -> f64 {
        self.zeta.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MediumKind {
    Homogeneous,
    /// `ζ = g·r⊥`
    LinearGradient {
        g: Vec2,
    },
    /// `ζ = −½α²|r⊥ − r_c|²`
    ParabolicGrin {
        alpha: f64,
        center: Vec2,
    },
    /// `ζ = a·exp(−|r − r_c|²/w²)`
    GaussianDefect {
        amplitude: f64,
        width: f64,
        center: Vec3,
    },
    /// Trilinear interpolation of 3D samples.
    Gridded3d(SampledField),
    /// z-invariant, bilinear interpolation; `dims[2]` must be 1.
    Gridded2d(SampledField),
}

/// What to do when `sup|ζ|` exceeds the weakness bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimePolicy {
    #[default]
    Enforce,
    /// Accept the profile and tag it out-of-regime.
    Override,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediumProfile {
    n0: f64,
    kind: MediumKind,
    domain: Bounds,
    sup_zeta: f64,
    out_of_regime: bool,
}

impl MediumProfile {
    pub fn new(n0: f64, kind: MediumKind, domain: Bounds) -> Result<Self> {
        Self::with_policy(n0, kind, domain, RegimePolicy::Enforce)
    }

    pub fn homogeneous(n0: f64) -> Result<Self> {
        Self::new(n0, MediumKind::Homogeneous, Bounds::unbounded())
    }

    pub fn with_policy(
        n0: f64,
        kind: MediumKind,
        domain: Bounds,
        policy: RegimePolicy,
    ) -> Result<Self> {
        if !(n0 > 0.0) || !n0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "n0 must be positive and finite, got {n0}"
            )));
        }
        let domain = match &kind {
            MediumKind::Gridded3d(f) => {
                check_dims(f, false)?;
                intersect(domain, grid_bounds(f, false))
            }
            MediumKind::Gridded2d(f) => {
                check_dims(f, true)?;
                intersect(domain, grid_bounds(f, true))
            }
            _ => domain,
        };
        let sup_zeta = sup_abs_zeta(&kind, &domain)?;
        let bound = WEAKNESS_BOUND * n0;
        let out_of_regime = !(sup_zeta <= bound);
        if out_of_regime && policy == RegimePolicy::Enforce {
            return Err(Error::NotWeaklyInhomogeneous {
                sup: sup_zeta,
                bound,
            });
        }
        Ok(MediumProfile {
            n0,
            kind,
            domain,
            sup_zeta,
            out_of_regime,
        })
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn kind(&self) -> &MediumKind {
        &self.kind
    }

    pub fn domain(&self) -> &Bounds {
        &self.domain
    }

    /// `sup|ζ|` over the declared domain.
    pub fn sup_zeta(&self) -> f64 {
        self.sup_zeta
    }

    /// True when the profile was accepted under [`RegimePolicy::Override`].
    pub fn out_of_regime(&self) -> bool {
        self.out_of_regime
    }

    /// Independent of `z`, so one transverse slice serves every step.
    pub fn is_z_invariant(&self) -> bool {
        !matches!(
            self.kind,
            MediumKind::GaussianDefect { .. } | MediumKind::Gridded3d(_)
        )
    }

    pub fn zeta_at(&self, x: Vec3) -> Result<f64> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("position"));
        }
        self.domain.check(&x)?;
        Ok(self.zeta_unchecked(&x))
    }

    pub fn index_at(&self, x: Vec3) -> Result<f64> {
        Ok(self.n0 + self.zeta_at(x)?)
    }

    pub fn grad_index(&self, x: Vec3) -> Result<Vec3> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("position"));
        }
        self.domain.check(&x)?;
        Ok(match &self.kind {
            MediumKind::Homogeneous => Vec3::zeros(),
            MediumKind::LinearGradient { g } => Vec3::new(g.x, g.y, 0.0),
            MediumKind::ParabolicGrin { alpha, center } => {
                let a2 = alpha * alpha;
                Vec3::new(-a2 * (x.x - center.x), -a2 * (x.y - center.y), 0.0)
            }
            MediumKind::GaussianDefect {
                amplitude,
                width,
                center,
            } => {
                let d = x - center;
                let w2 = width * width;
                d * (-2.0 * amplitude * (-d.norm_squared() / w2).exp() / w2)
            }
            MediumKind::Gridded3d(f) => self.grid_gradient(f, &x, 3)?,
            MediumKind::Gridded2d(f) => self.grid_gradient(f, &x, 2)?,
        })
    }

    /// `ζ` on a transverse lattice at fixed `z`, row-major in `(x, y)`.
    pub fn sample_slice(&self, xs: &[f64], ys: &[f64], z: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for &x in xs {
            for &y in ys {
                out.push(self.zeta_at(Vec3::new(x, y, z))?);
            }
        }
        Ok(out)
    }

    fn zeta_unchecked(&self, x: &Vec3) -> f64 {
        match &self.kind {
            MediumKind::Homogeneous => 0.0,
            MediumKind::LinearGradient { g } => g.x * x.x + g.y * x.y,
            MediumKind::ParabolicGrin { alpha, center } => {
                let dx = x.x - center.x;
                let dy = x.y - center.y;
                -0.5 * alpha * alpha * (dx * dx + dy * dy)
            }
            MediumKind::GaussianDefect {
                amplitude,
                width,
                center,
            } => amplitude * (-(x - center).norm_squared() / (width * width)).exp(),
            MediumKind::Gridded3d(f) => f.interpolate(x),
            MediumKind::Gridded2d(f) => f.interpolate(&Vec3::new(x.x, x.y, f.origin[2])),
        }
    }

    /// Central differences with step equal to half the grid spacing.
    fn grid_gradient(&self, f: &SampledField, x: &Vec3, axes: usize) -> Result<Vec3> {
        let mut g = Vec3::zeros();
        for axis in 0..axes {
            if f.dims[axis] == 1 {
                continue;
            }
            let h = 0.5 * f.spacing[axis];
            let mut plus = *x;
            let mut minus = *x;
            plus[axis] += h;
            minus[axis] -= h;
            g[axis] = (self.zeta_at(plus)? - self.zeta_at(minus)?) / (2.0 * h);
        }
        Ok(g)
    }

    /// `|∇n|/(k n)` statistics over a deterministic lattice covering `region`.
    pub fn adiabaticity_report(&self, k: f64, region: &Region) -> Result<AdiabaticityReport> {
        if !(k > 0.0) {
            return Err(Error::InvalidInput(format!("k must be positive, got {k}")));
        }
        let points = region.lattice()?;
        let mut max = 0.0_f64;
        let mut sum = 0.0;
        let mut argmax = points[0];
        for x in &points {
            let ratio = self.grad_index(*x)?.norm() / (k * self.index_at(*x)?);
            sum += ratio;
            if ratio > max {
                max = ratio;
                argmax = *x;
            }
        }
        Ok(AdiabaticityReport {
            max,
            mean: sum / points.len() as f64,
            argmax,
            samples: points.len(),
        })
    }
}

/// Sample region for [`MediumProfile::adiabaticity_report`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Finite box sampled with `per_axis` points on each axis (one on degenerate axes).
    Box { bounds: Bounds, per_axis: usize },
    /// `|r⊥ − center| ≤ radius` for `z` in `[z_min, z_max]`.
    Cylinder {
        center: Vec2,
        radius: f64,
        z_min: f64,
        z_max: f64,
        per_axis: usize,
    },
}

impl Region {
    fn lattice(&self) -> Result<Vec<Vec3>> {
        let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            if n <= 1 || lo == hi {
                return vec![lo];
            }
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let mut out = Vec::new();
        match self {
            Region::Box { bounds, per_axis } => {
                if !(0..3).all(|i| bounds.min[i].is_finite() && bounds.max[i].is_finite()) {
                    return Err(Error::InvalidInput("region box must be finite".into()));
                }
                for x in axis(bounds.min.x, bounds.max.x, *per_axis) {
                    for y in axis(bounds.min.y, bounds.max.y, *per_axis) {
                        for z in axis(bounds.min.z, bounds.max.z, *per_axis) {
                            out.push(Vec3::new(x, y, z));
                        }
                    }
                }
            }
            Region::Cylinder {
                center,
                radius,
                z_min,
                z_max,
                per_axis,
            } => {
                if !(*radius > 0.0) || !(z_min <= z_max) {
                    return Err(Error::InvalidInput(
                        "cylinder needs radius > 0 and z_min <= z_max".into(),
                    ));
                }
                let n = (*per_axis).max(3) | 1;
                let r2 = radius * radius * (1.0 + 1e-12);
                let zs = axis(*z_min, *z_max, *per_axis);
                for x in axis(center.x - radius, center.x + radius, n) {
                    for y in axis(center.y - radius, center.y + radius, n) {
                        if (x - center.x).powi(2) + (y - center.y).powi(2) <= r2 {
                            for &z in &zs {
                                out.push(Vec3::new(x, y, z));
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticityReport {
    pub max: f64,
    pub mean: f64,
    pub argmax: Vec3,
    pub samples: usize,
}

fn check_dims(f: &SampledField, planar: bool) -> Result<()> {
    if planar && f.dims[2] != 1 {
        return Err(Error::InvalidInput(
            "z-invariant samples must have nz = 1".into(),
        ));
    }
    let needed = if planar { 2 } else { 3 };
    if f.dims[..needed].iter().any(|&d| d < 2) {
        return Err(Error::InvalidInput(format!(
            "gridded medium needs at least 2 samples per axis, got {:?}",
            f.dims
        )));
    }
    Ok(())
}

fn grid_bounds(f: &SampledField, planar: bool) -> Bounds {
    let mut b = Bounds::unbounded();
    let axes = if planar { 2 } else { 3 };
    for axis in 0..axes {
        b.min[axis] = f.origin[axis];
        b.max[axis] = f.upper(axis);
    }
    b
}

fn intersect(a: Bounds, b: Bounds) -> Bounds {
    Bounds {
        min: a.min.sup(&b.min),
        max: a.max.inf(&b.max),
    }
}

fn sup_abs_zeta(kind: &MediumKind, domain: &Bounds) -> Result<f64> {
    let finite_transverse = || {
        if domain.transverse_is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "unbounded profiles need a finite transverse domain".into(),
            ))
        }
    };
    Ok(match kind {
        MediumKind::Homogeneous => 0.0,
        MediumKind::LinearGradient { g } => {
            if g.norm() == 0.0 {
                0.0
            } else {
                finite_transverse()?;
                g.x.abs() * domain.min.x.abs().max(domain.max.x.abs())
                    + g.y.abs() * domain.min.y.abs().max(domain.max.y.abs())
            }
        }
        MediumKind::ParabolicGrin { alpha, center } => {
            if *alpha == 0.0 {
                0.0
            } else {
                finite_transverse()?;
                let dx = (domain.min.x - center.x)
                    .abs()
                    .max((domain.max.x - center.x).abs());
                let dy = (domain.min.y - center.y)
                    .abs()
                    .max((domain.max.y - center.y).abs());
                0.5 * alpha * alpha * (dx * dx + dy * dy)
            }
        }
        MediumKind::GaussianDefect {
            amplitude, width, ..
        } => {
            if !(*width > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "defect width must be positive, got {width}"
                )));
            }
            amplitude.abs()
        }
        MediumKind::Gridded3d(f) | MediumKind::Gridded2d(f) => f.sup_abs(),
    })
}
