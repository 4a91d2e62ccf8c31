//! Polarized ray tracing with the Berry anomalous velocity, and quadratures
//! for the spin-Hall deflection, Berry phase and Rytov angle.
//!
//! Rays are marched in `z`:
//!
//! ```text
//! dp/dz  = (n/p_z) ∇n
//! dr⊥/dz = p⊥/p_z + (σ/k) (B(p) × dp/dz)⊥,    B = p/(2p_z³)
//! ```
//!
//! with `p_z = √(n² − p⊥²)` recomputed from the local index at every stage, so
//! `|p| = n(r)` holds by construction. `dp/dz` uses the zeroth-order direction.

use std::io::Write;

use rayon::prelude::*;

use crate::fw::{berry_curvature, projected_connection};
use crate::medium::MediumProfile;
use crate::{Error, Result, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    /// Position; `r.z` is the evolution parameter.
    pub r: Vec3,
    /// Momentum with `|p| = n(r)`.
    pub p: Vec3,
    pub sigma: f64,
    /// `∫𝒜⊥·dp` accumulated along the path, already multiplied by `σ`.
    pub berry_phase: f64,
    /// `k⁻¹σ∫B×dp`.
    pub anomalous_shift: Vec3,
    /// `k∫p·dr`.
    pub dynamical_phase: f64,
}

impl RayState {
    /// Launch at `r` with transverse momentum `p⊥`; `p_z` follows from `n(r)`.
    pub fn launch(profile: &MediumProfile, r: Vec3, p_perp: Vec2, sigma: f64) -> Result<Self> {
        let n = profile.index_at(r)?;
        let pz = forward_pz(n, p_perp)?;
        Ok(RayState {
            r,
            p: Vec3::new(p_perp.x, p_perp.y, pz),
            sigma,
            berry_phase: 0.0,
            anomalous_shift: Vec3::zeros(),
            dynamical_phase: 0.0,
        })
    }

    /// A bare sample at a given momentum, for building synthetic paths.
    pub fn at(z: f64, p: Vec3, sigma: f64) -> Self {
        RayState {
            r: Vec3::new(0.0, 0.0, z),
            p,
            sigma,
            berry_phase: 0.0,
            anomalous_shift: Vec3::zeros(),
            dynamical_phase: 0.0,
        }
    }

    pub fn z(&self) -> f64 {
        self.r.z
    }
}

fn forward_pz(n: f64, p_perp: Vec2) -> Result<f64> {
    let pz2 = n * n - p_perp.norm_squared();
    if !pz2.is_finite() {
        return Err(Error::NonFinite("momentum"));
    }
    if !(pz2 > 0.0) {
        return Err(Error::NonParaxial {
            what: "p_z reached zero; paraxial propagation lost",
            value: p_perp.norm(),
            limit: n,
        });
    }
    Ok(pz2.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    Fixed(f64),
    /// Step chosen so `|Δp|` per step stays below `max_dp`, capped at `h_max`.
    MaxMomentumChange {
        max_dp: f64,
        h_max: f64,
    },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::MaxMomentumChange {
            max_dp: 1e-3,
            h_max: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub step: StepControl,
    /// Drop the Berry term from `dr/dz`; phase and shift side channels are still accumulated.
    pub zeroth_order: bool,
    /// Use `p_z = n0` inside `𝒜` and `B`.
    pub strict_paraxial: bool,
    /// Smallest admissible step before the trace aborts.
    pub min_step: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            step: StepControl::default(),
            zeroth_order: false,
            strict_paraxial: false,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub integrator: &'static str,
    pub k: f64,
    pub steps: usize,
    pub zeroth_order: bool,
    pub strict_paraxial: bool,
    pub out_of_regime: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<RayState>,
    pub step: StepControl,
    pub meta: TraceMeta,
}

impl Trajectory {
    /// Wraps externally built samples; `z` must increase strictly.
    pub fn from_samples(samples: Vec<RayState>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(
                "a trajectory needs at least 2 samples".into(),
            ));
        }
        if samples.windows(2).any(|w| !(w[1].z() > w[0].z())) {
            return Err(Error::InvalidInput(
                "trajectory z must increase strictly".into(),
            ));
        }
        Ok(Trajectory {
            samples,
            step: StepControl::Fixed(f64::NAN),
            meta: TraceMeta {
                integrator: "external",
                k: f64::NAN,
                steps: 0,
                zeroth_order: false,
                strict_paraxial: false,
                out_of_regime: false,
            },
        })
    }

    pub fn last(&self) -> &RayState {
        self.samples.last().expect("trajectory has samples")
    }

    /// Largest `||p| − n(r)|` over the samples.
    pub fn dispersion_error(&self, profile: &MediumProfile) -> Result<f64> {
        self.samples.iter().try_fold(0.0_f64, |acc, s| {
            Ok(acc.max((s.p.norm() - profile.index_at(s.r)?).abs()))
        })
    }

    /// Polar angle `θ = atan(|p⊥|/p_z)` and unwrapped azimuth `φ` of the momentum.
    pub fn theta_phi_history(&self) -> (Vec<f64>, Vec<f64>) {
        let theta = self
            .samples
            .iter()
            .map(|s| s.p.xy().norm().atan2(s.p.z))
            .collect();
        let mut phi: Vec<f64> = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let raw = s.p.y.atan2(s.p.x);
            let v = match phi.last() {
                Some(&prev) => prev + wrap_pi(raw - prev),
                None => raw,
            };
            phi.push(v);
        }
        (theta, phi)
    }

    pub const CSV_COLUMNS: &'static str =
        "z,r_x,r_y,r_z,p_x,p_y,p_z,sigma,berry_phase,shift_x,shift_y,dyn_phase";

    /// CSV with `#` comment lines first, then the header row, then one row per
    /// sample in `{:.17e}` so every double round-trips.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "{}", Self::CSV_COLUMNS)?;
        for s in &self.samples {
            let row = [
                s.z(),
                s.r.x,
                s.r.y,
                s.r.z,
                s.p.x,
                s.p.y,
                s.p.z,
                s.sigma,
                s.berry_phase,
                s.anomalous_shift.x,
                s.anomalous_shift.y,
                s.dynamical_phase,
            ];
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn wrap_pi(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    x - tau * ((x + std::f64::consts::PI) / tau).floor()
}

/// Integrated quantities: x, y, p_x, p_y, berry, shift (3), dynamical phase.
type State = [f64; 9];

struct Rhs<'a> {
    profile: &'a MediumProfile,
    sigma: f64,
    k: f64,
    opts: TraceOptions,
}

struct Eval {
    d: State,
    dp: Vec3,
}

impl Rhs<'_> {
    fn eval(&self, z: f64, y: &State) -> Result<Eval> {
        let r = Vec3::new(y[0], y[1], z);
        let n = self.profile.index_at(r)?;
        let grad = self.profile.grad_index(r)?;
        let p_perp = Vec2::new(y[2], y[3]);
        let pz = forward_pz(n, p_perp)?;
        let p = Vec3::new(p_perp.x, p_perp.y, pz);
        let dp = grad * (n / pz);

        // p_z inside the geometric quantities.
        let geom_p = if self.opts.strict_paraxial {
            Vec3::new(p.x, p.y, self.profile.n0())
        } else {
            p
        };
        let conn = projected_connection(geom_p, self.sigma)?;
        let shift_rate = berry_curvature(geom_p)?.cross(&dp) * (self.sigma / self.k);

        let mut dr = Vec3::new(p.x / pz, p.y / pz, 1.0);
        if !self.opts.zeroth_order {
            dr.x += shift_rate.x;
            dr.y += shift_rate.y;
        }
        Ok(Eval {
            d: [
                dr.x,
                dr.y,
                dp.x,
                dp.y,
                conn.dot(&dp),
                shift_rate.x,
                shift_rate.y,
                shift_rate.z,
                self.k * p.dot(&dr),
            ],
            dp,
        })
    }
}

fn axpy(y: &State, h: f64, d: &State) -> State {
    let mut out = *y;
    for i in 0..9 {
        out[i] += h * d[i];
    }
    out
}

/// Classical RK4 from `init.r.z` to `z_end`, landing exactly on `z_end`.
pub fn trace_ray(
    profile: &MediumProfile,
    init: &RayState,
    k: f64,
    z_end: f64,
    opts: TraceOptions,
) -> Result<Trajectory> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidInput(format!("k must be positive, got {k}")));
    }
    let z0 = init.z();
    if !(z_end > z0) {
        return Err(Error::InvalidInput(format!(
            "z_end {z_end} must exceed the start {z0}"
        )));
    }
    if !(init.p.z > 0.0) {
        return Err(Error::NonParaxial {
            what: "initial p_z must be positive",
            value: init.p.z,
            limit: 0.0,
        });
    }
    let n = profile.index_at(init.r)?;
    if (init.p.norm() - n).abs() > 1e-9 * n {
        return Err(Error::InvalidInput(format!(
            "initial |p| = {} does not match n(r) = {n}",
            init.p.norm()
        )));
    }
    match opts.step {
        StepControl::Fixed(h) if !(h > 0.0) => {
            return Err(Error::InvalidInput(format!(
                "step must be positive, got {h}"
            )))
        }
        StepControl::MaxMomentumChange { max_dp, h_max } if !(max_dp > 0.0 && h_max > 0.0) => {
            return Err(Error::InvalidInput(
                "max_dp and h_max must be positive".into(),
            ))
        }
        _ => {}
    }

    let rhs = Rhs {
        profile,
        sigma: init.sigma,
        k,
        opts,
    };
    let mut y: State = [
        init.r.x,
        init.r.y,
        init.p.x,
        init.p.y,
        init.berry_phase,
        init.anomalous_shift.x,
        init.anomalous_shift.y,
        init.anomalous_shift.z,
        init.dynamical_phase,
    ];
    let mut z = z0;
    let mut samples = vec![*init];
    let span = z_end - z0;
    while z < z_end {
        let k1 = rhs.eval(z, &y)?;
        let mut h = match opts.step {
            StepControl::Fixed(h) => h,
            StepControl::MaxMomentumChange { max_dp, h_max } => {
                let rate = k1.dp.norm();
                if rate > 0.0 {
                    h_max.min(max_dp / rate)
                } else {
                    h_max
                }
            }
        };
        let remaining = z_end - z;
        // Absorb a sliver so the final step does not collapse below min_step.
        if h >= remaining || remaining - h < 1e-9 * span {
            h = remaining;
        } else if h < opts.min_step {
            return Err(Error::StepUnderflow { z });
        }
        let k2 = rhs.eval(z + 0.5 * h, &axpy(&y, 0.5 * h, &k1.d))?;
        let k3 = rhs.eval(z + 0.5 * h, &axpy(&y, 0.5 * h, &k2.d))?;
        let k4 = rhs.eval(z + h, &axpy(&y, h, &k3.d))?;
        for i in 0..9 {
            y[i] += h / 6.0 * (k1.d[i] + 2.0 * k2.d[i] + 2.0 * k3.d[i] + k4.d[i]);
        }
        z = if h == remaining { z_end } else { z + h };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanDetected {
                last_good_z: samples.last().map(|s| s.z()).unwrap_or(z0),
            });
        }
        let r = Vec3::new(y[0], y[1], z);
        let n = profile.index_at(r)?;
        let p_perp = Vec2::new(y[2], y[3]);
        let pz = forward_pz(n, p_perp)?;
        samples.push(RayState {
            r,
            p: Vec3::new(p_perp.x, p_perp.y, pz),
            sigma: init.sigma,
            berry_phase: y[4],
            anomalous_shift: Vec3::new(y[5], y[6], y[7]),
            dynamical_phase: y[8],
        });
    }
    let steps = samples.len() - 1;
    Ok(Trajectory {
        samples,
        step: opts.step,
        meta: TraceMeta {
            integrator: "rk4",
            k,
            steps,
            zeroth_order: opts.zeroth_order,
            strict_paraxial: opts.strict_paraxial,
            out_of_regime: profile.out_of_regime(),
        },
    })
}

/// Independent traces in parallel; results keep the order of `inits`.
pub fn trace_batch(
    profile: &MediumProfile,
    inits: &[RayState],
    k: f64,
    z_end: f64,
    opts: TraceOptions,
) -> Vec<Result<Trajectory>> {
    inits
        .par_iter()
        .map(|init| trace_ray(profile, init, k, z_end, opts))
        .collect()
}

/// `k⁻¹σ∫p×dp/(2p_z³)` by the trapezoid rule over the stored momenta.
pub fn spin_hall_deflection(traj: &Trajectory, k: f64, sigma: f64) -> Vec3 {
    let mut acc = Vec3::zeros();
    for w in traj.samples.windows(2) {
        let (a, b) = (w[0].p, w[1].p);
        let weight = a / (2.0 * a.z.powi(3)) + b / (2.0 * b.z.powi(3));
        acc += (weight * 0.5).cross(&(b - a));
    }
    acc * (sigma / k)
}

/// `σ∫𝒜⊥·dp` by the trapezoid rule over the stored momenta.
pub fn berry_phase(traj: &Trajectory, sigma: f64) -> f64 {
    let conn = |p: Vec3| Vec3::new(-p.y, p.x, 0.0) / (4.0 * p.z * p.z);
    let mut acc = 0.0;
    for w in traj.samples.windows(2) {
        let (a, b) = (w[0].p, w[1].p);
        acc += 0.5 * (conn(a) + conn(b)).dot(&(b - a));
    }
    sigma * acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RytovAngles {
    /// `¼∫tan²θ dφ`
    pub tan_squared: f64,
    /// `¼∫θ² dφ`
    pub theta_squared: f64,
    /// `½∫θ² dφ`, the solid-angle form common in the Berry-phase literature.
    pub solid_angle: f64,
    /// Some `θ` exceeded 0.3 rad, where the small-angle form is unreliable.
    pub large_angle_warning: bool,
}

/// Trapezoid quadratures of the Rytov angle over a sampled `θ(φ)`.
pub fn rytov_angle_closed(theta: &[f64], phi: &[f64]) -> Result<RytovAngles> {
    if theta.len() != phi.len() || theta.len() < 2 {
        return Err(Error::InvalidInput(
            "theta and phi need the same length, at least 2".into(),
        ));
    }
    let mut tan2 = 0.0;
    let mut th2 = 0.0;
    for i in 1..theta.len() {
        let dphi = phi[i] - phi[i - 1];
        tan2 += 0.5 * (theta[i - 1].tan().powi(2) + theta[i].tan().powi(2)) * dphi;
        th2 += 0.5 * (theta[i - 1].powi(2) + theta[i].powi(2)) * dphi;
    }
    Ok(RytovAngles {
        tan_squared: 0.25 * tan2,
        theta_squared: 0.25 * th2,
        solid_angle: 0.5 * th2,
        large_angle_warning: theta.iter().any(|t| t.abs() > 0.3),
    })
}

/// Uniform samples of a constant-`θ` cone over `[φ0, φ1]`.
pub fn cone_samples(theta: f64, phi0: f64, phi1: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let phi = (0..count)
        .map(|i| phi0 + (phi1 - phi0) * i as f64 / (count - 1) as f64)
        .collect();
    (vec![theta; count], phi)
}

/// Synthetic trajectory whose momentum runs around a cone of half-angle `θ` and radius `n`.
pub fn cone_loop(
    theta: f64,
    n: f64,
    phi0: f64,
    phi1: f64,
    count: usize,
    sigma: f64,
) -> Result<Trajectory> {
    let samples = (0..count)
        .map(|i| {
            let phi = phi0 + (phi1 - phi0) * i as f64 / (count - 1) as f64;
            let p = Vec3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ) * n;
            RayState::at(i as f64, p, sigma)
        })
        .collect();
    Trajectory::from_samples(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBreakdown {
    /// `k∫p·dr`
    pub dynamical: f64,
    /// `σ∫𝒜⊥·dp`
    pub berry: f64,
    pub total: f64,
}

/// Dynamical plus geometric phase over the stored samples; `−ωt` is common to
/// every polarization and left out.
pub fn total_phase(traj: &Trajectory, k: f64, sigma: f64) -> PhaseBreakdown {
    let mut dynamical = 0.0;
    for w in traj.samples.windows(2) {
        dynamical += 0.5 * (w[0].p + w[1].p).dot(&(w[1].r - w[0].r));
    }
    dynamical *= k;
    let berry = berry_phase(traj, sigma);
    PhaseBreakdown {
        dynamical,
        berry,
        total: dynamical + berry,
    }
}

/// Launch point and momentum of a circular helical ray in the parabolic GRIN
/// profile `n = n0 − ½α²r⊥²`, with polar angle `θ` of the momentum.
///
/// The orbit radius solves `ρ² = n sin²θ / α²` with `n = n0/(1 + ½sin²θ)`,
/// and the period in `z` is `2πρ p_z/|p⊥|`. `handedness = +1` circulates
/// counter-clockwise seen from `+z`.
pub fn grin_helix_launch(alpha: f64, n0: f64, theta: f64, handedness: f64) -> Result<HelixLaunch> {
    if !(alpha > 0.0) || !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidInput(
            "helix needs alpha > 0 and 0 < theta < pi/2".into(),
        ));
    }
    let s2 = theta.sin().powi(2);
    let n = n0 / (1.0 + 0.5 * s2);
    let rho = (n * s2).sqrt() / alpha;
    let p_perp = n * theta.sin();
    let p_z = n * theta.cos();
    Ok(HelixLaunch {
        radius: rho,
        index: n,
        r: Vec3::new(rho, 0.0, 0.0),
        p: Vec3::new(0.0, handedness.signum() * p_perp, p_z),
        period: std::f64::consts::TAU * rho * p_z / p_perp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelixLaunch {
    pub radius: f64,
    pub index: f64,
    pub r: Vec3,
    pub p: Vec3,
    pub period: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{Bounds, MediumKind};
    use std::f64::consts::TAU;

    fn linear(g: f64) -> MediumProfile {
        MediumProfile::new(
            1.0,
            MediumKind::LinearGradient {
                g: Vec2::new(g, 0.0),
            },
            Bounds::transverse(5.0).unwrap(),
        )
        .unwrap()
    }

    fn closed_form_x(g: f64, z: f64) -> (f64, f64) {
        // p_z = 1 is conserved; p_x = sinh(gz), x = (cosh(gz) − 1)/g.
        ((g * z).sinh(), ((g * z).cosh() - 1.0) / g)
    }

    #[test]
    fn homogeneous_straight_line() {
        let m = MediumProfile::homogeneous(1.0).unwrap();
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), 1.0).unwrap();
        let t = trace_ray(&m, &init, 100.0, 5.0, TraceOptions::default()).unwrap();
        for s in &t.samples {
            assert_eq!(s.r.xy(), Vec2::zeros());
            assert_eq!(s.p, Vec3::z());
        }
        assert_eq!(t.last().z(), 5.0);
        assert!((t.last().dynamical_phase - 500.0).abs() < 1e-9);
    }

    #[test]
    fn linear_gradient_closed_form() {
        let m = linear(0.01);
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), 0.0).unwrap();
        let opts = TraceOptions {
            zeroth_order: true,
            ..Default::default()
        };
        let t = trace_ray(&m, &init, 100.0, 10.0, opts).unwrap();
        let (px, x) = closed_form_x(0.01, 10.0);
        let last = t.last();
        assert!((last.r.x - x).abs() <= 1e-8, "{}", last.r.x - x);
        assert!((last.p.x - px).abs() <= 1e-8);
        assert!((x - 0.50042).abs() < 1e-5);
        assert!(t.dispersion_error(&m).unwrap() <= 1e-9);
    }

    #[test]
    fn fourth_order_convergence() {
        let m = linear(0.02);
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::new(0.02, 0.0), 0.0).unwrap();
        // p_z is conserved; with p_x(0)=0.02 the closed form uses the shifted rapidity.
        let pz = init.p.z;
        let u0 = (0.02 / pz).asinh();
        let exact = (pz / 0.02) * ((u0 + 0.02 * 20.0 / pz).cosh() - u0.cosh());
        let err = |h: f64| {
            let opts = TraceOptions {
                step: StepControl::Fixed(h),
                zeroth_order: true,
                ..Default::default()
            };
            (trace_ray(&m, &init, 100.0, 20.0, opts).unwrap().last().r.x - exact).abs()
        };
        let ratio = err(0.5) / err(0.25);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn helicities_split_antisymmetrically() {
        let m = linear(0.01);
        let run = |sigma: f64| {
            let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), sigma).unwrap();
            trace_ray(&m, &init, 100.0, 10.0, TraceOptions::default()).unwrap()
        };
        let (a, b) = (run(1.0), run(-1.0));
        let (ya, yb) = (a.last().r.y, b.last().r.y);
        assert!(ya.abs() > 1e-6);
        assert!((ya + yb).abs() < 1e-14 * ya.abs().max(1.0));
        assert!((a.last().r.x - b.last().r.x).abs() < 1e-12);
        assert_eq!(a.last().anomalous_shift, -b.last().anomalous_shift);
        assert_eq!(a.last().berry_phase, -b.last().berry_phase);
        // Realized shift equals the quadrature prediction to integrator accuracy.
        let predicted = spin_hall_deflection(&a, 100.0, 1.0);
        assert!(
            (predicted.y - ya).abs() < 1e-8 * ya.abs().max(1e-6) + 1e-12,
            "{} {ya}",
            predicted.y
        );
    }

    #[test]
    fn zeroth_order_helicities_bitwise_equal() {
        let m = linear(0.01);
        let opts = TraceOptions {
            zeroth_order: true,
            ..Default::default()
        };
        let run = |sigma: f64| {
            let init = RayState::launch(&m, Vec3::zeros(), Vec2::new(0.01, 0.02), sigma).unwrap();
            trace_ray(&m, &init, 100.0, 10.0, opts).unwrap()
        };
        let (a, b) = (run(1.0), run(-1.0));
        for (s, t) in a.samples.iter().zip(&b.samples) {
            assert_eq!(s.r, t.r);
            assert_eq!(s.p, t.p);
        }
    }

    #[test]
    fn anomalous_shift_is_perpendicular_to_bending() {
        let m = linear(0.01);
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), 1.0).unwrap();
        let t = trace_ray(&m, &init, 100.0, 3.0, TraceOptions::default()).unwrap();
        let s = t.last().anomalous_shift;
        assert!(s.x.abs() < 1e-12 && s.y.abs() > 0.0);
    }

    #[test]
    fn loss_of_paraxiality_aborts() {
        // Index falling along z only: p⊥ is conserved while n drops through |p⊥|.
        let f = crate::medium::SampledField::from_fn(
            [3, 3, 81],
            [100.0, 100.0, 0.1],
            [-100.0, -100.0, 0.0],
            |x| -0.5 * x.z / 8.0,
        )
        .unwrap();
        let m = MediumProfile::with_policy(
            1.0,
            MediumKind::Gridded3d(f),
            Bounds::unbounded(),
            crate::medium::RegimePolicy::Override,
        )
        .unwrap();
        assert!(m.out_of_regime());
        let init =
            RayState::launch(&m, Vec3::new(0.0, 0.0, 0.5), Vec2::new(0.6, 0.0), 1.0).unwrap();
        let opts = TraceOptions {
            zeroth_order: true,
            ..Default::default()
        };
        let err = trace_ray(&m, &init, 100.0, 7.5, opts).unwrap_err();
        assert!(
            matches!(err, Error::NonParaxial { .. } | Error::StepUnderflow { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn bad_initial_state_rejected() {
        let m = MediumProfile::homogeneous(1.0).unwrap();
        let mut init = RayState::at(0.0, Vec3::new(0.0, 0.0, 1.1), 1.0);
        assert!(trace_ray(&m, &init, 1.0, 1.0, TraceOptions::default()).is_err());
        init.p = Vec3::new(0.0, 0.0, -1.0);
        assert!(trace_ray(&m, &init, 1.0, 1.0, TraceOptions::default()).is_err());
    }

    #[test]
    fn step_underflow_reported() {
        let m = linear(0.01);
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), 1.0).unwrap();
        let opts = TraceOptions {
            step: StepControl::MaxMomentumChange {
                max_dp: 1e-16,
                h_max: 1.0,
            },
            min_step: 1e-9,
            ..Default::default()
        };
        assert!(matches!(
            trace_ray(&m, &init, 100.0, 1.0, opts),
            Err(Error::StepUnderflow { .. })
        ));
    }

    fn planar_path(count: usize) -> Trajectory {
        let samples = (0..count)
            .map(|i| {
                let px = 0.1 * i as f64 / (count - 1) as f64;
                RayState::at(i as f64, Vec3::new(px, 0.0, (1.0 - px * px).sqrt()), 1.0)
            })
            .collect();
        Trajectory::from_samples(samples).unwrap()
    }

    fn reduced_integral(x: f64) -> f64 {
        // ∫ dx / (2(1 − x²)²)
        0.5 * (x / (2.0 * (1.0 - x * x)) + 0.25 * ((1.0 + x) / (1.0 - x)).ln())
    }

    #[test]
    fn deflection_examples() {
        let constant = Trajectory::from_samples(vec![
            RayState::at(0.0, Vec3::new(0.1, 0.0, 0.99f64.sqrt()), 1.0),
            RayState::at(1.0, Vec3::new(0.1, 0.0, 0.99f64.sqrt()), 1.0),
        ])
        .unwrap();
        assert_eq!(spin_hall_deflection(&constant, 100.0, 1.0), Vec3::zeros());

        let t = planar_path(2001);
        let d = spin_hall_deflection(&t, 100.0, 1.0);
        let exact = reduced_integral(0.1) / 100.0;
        assert!((d.y - exact).abs() < 1e-6 * exact, "{} {exact}", d.y);
        assert!((d.y - 5.03e-4).abs() < 1e-6);
        assert!(d.x.abs() < 1e-18);
        assert_eq!(spin_hall_deflection(&t, 100.0, -1.0), -d);
    }

    #[test]
    fn berry_phase_examples() {
        let constant = Trajectory::from_samples(vec![
            RayState::at(0.0, Vec3::new(0.1, 0.0, 0.99f64.sqrt()), 1.0),
            RayState::at(1.0, Vec3::new(0.1, 0.0, 0.99f64.sqrt()), 1.0),
        ])
        .unwrap();
        assert_eq!(berry_phase(&constant, 1.0), 0.0);

        let theta: f64 = 0.05;
        let exact = 0.25 * theta.tan().powi(2) * TAU;
        let loop_ = cone_loop(theta, 1.0, 0.0, TAU, 20001, 1.0).unwrap();
        let phase = berry_phase(&loop_, 1.0);
        assert!((phase - exact).abs() < 1e-6 * exact, "{phase} {exact}");
        assert!((phase - 3.9335e-3).abs() < 1e-7);

        let reversed = cone_loop(theta, 1.0, TAU, 0.0, 20001, 1.0).unwrap();
        assert!((berry_phase(&reversed, 1.0) + phase).abs() < 1e-15);
        assert_eq!(berry_phase(&loop_, -1.0), -phase);
    }

    #[test]
    fn rytov_examples() {
        let (t, p) = cone_samples(0.0, 0.0, TAU, 100);
        let r = rytov_angle_closed(&t, &p).unwrap();
        assert_eq!(r.tan_squared, 0.0);
        assert_eq!(r.theta_squared, 0.0);

        let (t, p) = cone_samples(0.05, 0.0, TAU, 100);
        let r = rytov_angle_closed(&t, &p).unwrap();
        assert!((r.tan_squared - 3.9335e-3).abs() < 5e-8);
        assert!((r.theta_squared - 3.9270e-3).abs() < 5e-8);
        assert_eq!(r.solid_angle, 2.0 * r.theta_squared);
        assert!(!r.large_angle_warning);
        let cone = berry_phase(&cone_loop(0.05, 1.0, 0.0, TAU, 20001, 1.0).unwrap(), 1.0);
        assert!((cone - r.tan_squared).abs() < 1e-8);

        let (t, p) = cone_samples(0.2, 0.0, TAU, 100);
        let r = rytov_angle_closed(&t, &p).unwrap();
        let rel = r.tan_squared / r.theta_squared - 1.0;
        assert!((rel - (0.2f64.tan() / 0.2).powi(2) + 1.0).abs() < 1e-12);
        assert!((rel - 0.0272).abs() < 1e-3, "{rel}");

        let (t, p) = cone_samples(0.35, 0.0, 1.0, 10);
        assert!(rytov_angle_closed(&t, &p).unwrap().large_angle_warning);
        assert!(rytov_angle_closed(&t[..3], &p).is_err());
    }

    #[test]
    fn total_phase_examples() {
        let m = MediumProfile::homogeneous(1.5).unwrap();
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), 1.0).unwrap();
        let t = trace_ray(&m, &init, 10.0, 4.0, TraceOptions::default()).unwrap();
        let ph = total_phase(&t, 10.0, 1.0);
        assert!((ph.dynamical - 10.0 * 1.5 * 4.0).abs() < 1e-10);
        assert_eq!(ph.berry, 0.0);

        let loop_ = cone_loop(0.1, 1.0, 0.0, TAU, 1000, 1.0).unwrap();
        let a = total_phase(&loop_, 50.0, 1.0);
        let b = total_phase(&loop_, 50.0, -1.0);
        assert_eq!(a.dynamical, b.dynamical);
        assert!((a.total - b.total - 2.0 * a.berry.abs()).abs() < 1e-12 * a.total.abs());
    }

    fn grin(alpha: f64) -> MediumProfile {
        MediumProfile::new(
            1.0,
            MediumKind::ParabolicGrin {
                alpha,
                center: Vec2::zeros(),
            },
            Bounds::transverse(3.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn helix_stays_circular_and_matches_rytov() {
        let m = grin(0.1);
        let h = grin_helix_launch(0.1, 1.0, 0.1, 1.0).unwrap();
        let init = RayState {
            r: h.r,
            p: h.p,
            ..RayState::at(0.0, h.p, 1.0)
        };
        let opts = TraceOptions {
            zeroth_order: true,
            ..Default::default()
        };
        let t = trace_ray(&m, &init, 200.0, h.period, opts).unwrap();
        for s in &t.samples {
            assert!((s.r.xy().norm() - h.radius).abs() < 1e-8);
        }
        let end = t.last().r;
        assert!((end.xy() - h.r.xy()).norm() < 1e-7);
        let (theta, phi) = t.theta_phi_history();
        assert!((phi.last().unwrap() - phi[0] - TAU).abs() < 1e-7);
        let rytov = rytov_angle_closed(&theta, &phi).unwrap();
        let berry = total_phase(&t, 200.0, 1.0).berry;
        assert!(
            (berry - rytov.tan_squared).abs() <= 1e-6,
            "{berry} {}",
            rytov.tan_squared
        );
        assert!((rytov.tan_squared - 0.25 * 0.1f64.tan().powi(2) * TAU).abs() < 1e-7);
    }

    #[test]
    fn helix_handedness_flips_berry_phase() {
        let m = grin(0.1);
        let phase = |hand: f64| {
            let h = grin_helix_launch(0.1, 1.0, 0.1, hand).unwrap();
            let init = RayState {
                r: h.r,
                ..RayState::at(0.0, h.p, 1.0)
            };
            let opts = TraceOptions {
                zeroth_order: true,
                ..Default::default()
            };
            let t = trace_ray(&m, &init, 200.0, h.period, opts).unwrap();
            t.last().berry_phase
        };
        let (a, b) = (phase(1.0), phase(-1.0));
        assert!(a > 0.0);
        assert!((a + b).abs() < 1e-10);
    }

    #[test]
    fn csv_export_round_trips() {
        let t = planar_path(5);
        let mut out = Vec::new();
        t.write_csv(
            &mut out,
            &["version 0.1.0".into(), "units: lengths in 1/k0".into()],
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# version 0.1.0"));
        assert_eq!(lines.next(), Some("# units: lengths in 1/k0"));
        assert_eq!(lines.next(), Some(Trajectory::CSV_COLUMNS));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 5);
        for (row, s) in rows.iter().zip(&t.samples) {
            assert_eq!(row.len(), 12);
            assert_eq!(row[4], s.p.x);
            assert_eq!(row[6], s.p.z);
        }
    }

    #[test]
    fn batch_preserves_order() {
        let m = linear(0.01);
        let inits: Vec<RayState> = (0..8)
            .map(|i| {
                RayState::launch(&m, Vec3::new(0.1 * i as f64, 0.0, 0.0), Vec2::zeros(), 1.0)
                    .unwrap()
            })
            .collect();
        let out = trace_batch(&m, &inits, 100.0, 2.0, TraceOptions::default());
        for (i, t) in out.iter().enumerate() {
            let t = t.as_ref().unwrap();
            assert_eq!(t.samples[0].r.x, 0.1 * i as f64);
            let single = trace_ray(&m, &inits[i], 100.0, 2.0, TraceOptions::default()).unwrap();
            assert_eq!(&single, t);
        }
    }
}
