//! Self-checks of the algebra, geometry, ray and propagator layers with
//! documented tolerances.

use std::f64::consts::TAU;

use num_complex::Complex64;
use paraxial_core::clifford::{
    build_matrices, hamiltonian_matrix, pseudo_hermiticity_residual, verify_clifford,
    DiracMatrixSet, HamiltonianSymbol,
};
use paraxial_core::fw::{
    berry_connection_exact, berry_connection_paraxial, berry_curvature, fw_matrix,
    position_commutator_check, projected_connection, MomentumGrid,
};
use paraxial_core::medium::{Bounds, MediumKind, MediumProfile};
use paraxial_core::transport::{
    berry_phase, cone_loop, spin_hall_deflection, trace_ray, RayState, StepControl, TraceOptions,
    Trajectory,
};
use paraxial_core::wave::kinetic_propagator;
use paraxial_core::{Mat4, Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{TOOL, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, residual: f64, tolerance: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            residual,
            tolerance,
            bound: Bound::AtMost,
            pass: residual <= tolerance,
            detail,
        }
    }

    fn at_least(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            residual: value,
            tolerance,
            bound: Bound::AtLeast,
            pass: value >= tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub failed: Vec<String>,
    pub passed: bool,
}

/// Names accepted by the fault-injection hook.
pub const CHECK_NAMES: [&str; 14] = [
    "clifford_identities",
    "pseudo_hermiticity",
    "fw_diagonalization",
    "connection_exact_vs_fd",
    "connection_paraxial",
    "curvature_curl",
    "commutator_h2_scaling",
    "ray_linear_gradient",
    "rk4_order",
    "spin_hall_quadrature",
    "spin_hall_antisymmetry",
    "rytov_cone",
    "propagator_vs_expm",
    "propagator_pseudo_unitarity",
];

/// Relative corruption applied to the quantity under test by the fault hook.
const FAULT: f64 = 1e-3;

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn corrupt(set: &mut DiracMatrixSet) {
    set.m_x[(0, 2)] *= Complex64::new(1.0 + FAULT, 0.0);
}

pub fn clifford_identities(fault: bool) -> Check {
    let mut worst = 0.0_f64;
    for conj in [false, true] {
        let mut set = build_matrices(conj);
        if fault {
            corrupt(&mut set);
        }
        worst = worst.max(verify_clifford(&set).max_residual());
    }
    Check::at_most(
        "clifford_identities",
        worst,
        0.0,
        "squares, anticommutators, cyclic products and hermiticity, both matrix sets".into(),
    )
}

fn random_p(rng: &mut ChaCha8Rng, limit: f64) -> Vec2 {
    let r = limit * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..TAU);
    Vec2::new(r * a.cos(), r * a.sin())
}

pub fn pseudo_hermiticity(seed: u64, count: usize, fault: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for i in 0..count {
        let set = build_matrices(i % 2 == 1);
        let n0 = rng.random_range(1.0..2.0);
        let sym = HamiltonianSymbol {
            n0,
            zeta: rng.random_range(-0.1..0.1) * n0,
            p_perp: random_p(&mut rng, 0.9 * n0),
        };
        let mut h = hamiltonian_matrix(&sym, &set).expect("symbol within the paraxial domain");
        if fault {
            h[(0, 2)] *= Complex64::new(1.0 + FAULT, 0.0);
        }
        worst = worst.max(pseudo_hermiticity_residual(&h, &set));
    }
    Check::at_most(
        "pseudo_hermiticity",
        worst,
        1e-13,
        format!("max |βH†β − H| over {count} random symbols"),
    )
}

pub fn fw_diagonalization(seed: u64, count: usize, fault: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst = 0.0_f64;
    for i in 0..count {
        let set = build_matrices(i % 2 == 1);
        let n0 = rng.random_range(1.0..2.0);
        let p = random_p(&mut rng, 0.9 * n0);
        let fw = fw_matrix(p, n0, &set).expect("p below n0");
        worst = worst.max(fw.off_block_residual(&set));
    }
    if fault {
        worst += FAULT;
    }
    Check::at_most(
        "fw_diagonalization",
        worst,
        1e-12,
        format!("max off-block entry of U⁻¹H₀U + Eβ over {count} random p⊥ ≤ 0.9 n0"),
    )
}

/// `iU⁻¹∂U` by central differences in `p_x`, `p_y`.
pub fn numeric_connection(p: Vec2, n0: f64, set: &DiracMatrixSet, h: f64) -> [Mat4; 2] {
    let u_inv = fw_matrix(p, n0, set).expect("p below n0").inverse;
    let d = |e: Vec2| {
        let up = fw_matrix(p + e * h, n0, set).expect("p below n0").matrix;
        let um = fw_matrix(p - e * h, n0, set).expect("p below n0").matrix;
        u_inv * (up - um) * Complex64::new(0.0, 1.0 / (2.0 * h))
    };
    [d(Vec2::x()), d(Vec2::y())]
}

pub const CONNECTION_SAMPLES: [[f64; 2]; 6] = [
    [0.0, 0.0],
    [0.05, 0.0],
    [0.2, -0.1],
    [-0.05, 0.3],
    [0.4, 0.4],
    [-0.6, 0.1],
];

pub fn connection_exact_vs_fd(fault: bool) -> Check {
    let mut worst = 0.0_f64;
    for conj in [false, true] {
        let set = build_matrices(conj);
        for s in CONNECTION_SAMPLES {
            let p = Vec2::new(s[0], s[1]);
            let exact = berry_connection_exact(p, 1.0, &set).expect("p below n0");
            let num = numeric_connection(p, 1.0, &set, 1e-5);
            for i in 0..2 {
                let scale = if fault { 1.0 + FAULT } else { 1.0 };
                worst = worst.max(max_abs(&(exact[i] * Complex64::new(scale, 0.0) - num[i])));
            }
        }
    }
    Check::at_most(
        "connection_exact_vs_fd",
        worst,
        1e-8,
        "closed-form A⊥ vs iU⁻¹∇U, h = 1e-5, per entry, both matrix sets".into(),
    )
}

pub fn connection_paraxial(fault: bool) -> Check {
    let set = build_matrices(false);
    let p = Vec2::new(0.05, 0.0);
    let n0 = (1.0 + p.norm_squared()).sqrt();
    let exact = berry_connection_exact(p, n0, &set).expect("p below n0");
    let par = berry_connection_paraxial(p, 1.0, &set).expect("p_z positive");
    let (mut diff, mut scale) = (0.0_f64, 0.0_f64);
    for i in 0..2 {
        diff = diff.max(max_abs(&(exact[i] - par[i])));
        scale = scale.max(max_abs(&exact[i]));
    }
    let mut rel = diff / scale;
    if fault {
        rel += 1.0;
    }
    Check::at_most(
        "connection_paraxial",
        rel,
        5e-3,
        "max|A_exact − A_paraxial| / max|A_exact| at p⊥ = 0.05, p_z = 1".into(),
    )
}

pub fn curvature_curl(fault: bool) -> Check {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for s in CONNECTION_SAMPLES.iter().take(5) {
        for sigma in [1.0, -1.0] {
            let p = Vec3::new(s[0], s[1], (1.0 - s[0] * s[0] - s[1] * s[1]).sqrt());
            let d = |axis: usize| {
                let mut e = Vec3::zeros();
                e[axis] = h;
                (projected_connection(p + e, sigma).expect("paraxial")
                    - projected_connection(p - e, sigma).expect("paraxial"))
                    / (2.0 * h)
            };
            let (dx, dy, dz) = (d(0), d(1), d(2));
            let curl = Vec3::new(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x);
            let mut b = berry_curvature(p).expect("paraxial") * sigma;
            if fault {
                b *= 1.0 + FAULT;
            }
            worst = worst.max((curl - b).amax());
        }
    }
    Check::at_most(
        "curvature_curl",
        worst,
        1e-8,
        "finite-difference curl of 𝒜 vs σp/(2p_z³)".into(),
    )
}

pub fn commutator_h2_scaling(fault: bool) -> Check {
    let gaussian = |p: Vec3| {
        let d = p - Vec3::new(0.02, -0.01, 1.0);
        Complex64::new((-d.norm_squared() / (2.0 * 0.03 * 0.03)).exp(), 0.0)
    };
    let coarse = MomentumGrid::centered(Vec3::z(), 1e-2, 20);
    let fine = MomentumGrid::centered(Vec3::z(), 5e-3, 40);
    let a = position_commutator_check(1.0, 1.0, &coarse, gaussian).expect("grid in p_z > 0");
    let b = position_commutator_check(1.0, 1.0, &fine, gaussian).expect("grid in p_z > 0");
    let mut ratio = a.residual / b.residual;
    if fault {
        ratio *= 2.0;
    }
    Check::at_most(
        "commutator_h2_scaling",
        (ratio - 4.0).abs(),
        0.5,
        format!(
            "[r_i, r_j] − ik⁻²σε_ijk B_k residual {:.3e} at h = 1e-2, {:.3e} at h = 5e-3, ratio {ratio:.4}",
            a.residual, b.residual
        ),
    )
}

fn linear_gradient(g: f64) -> MediumProfile {
    MediumProfile::new(
        1.0,
        MediumKind::LinearGradient {
            g: Vec2::new(g, 0.0),
        },
        Bounds::transverse(5.0).unwrap(),
    )
    .expect("weak gradient")
}

pub fn ray_linear_gradient(fault: bool) -> Check {
    let g = 0.01;
    let m = linear_gradient(g);
    let init = RayState::launch(&m, Vec3::zeros(), Vec2::zeros(), 0.0).expect("inside the domain");
    let opts = TraceOptions {
        zeroth_order: true,
        ..TraceOptions::default()
    };
    let t = trace_ray(&m, &init, 100.0, 10.0, opts).expect("trace stays paraxial");
    // p_z = 1 is conserved, so x = (cosh(gz) − 1)/g.
    let exact = ((g * 10.0).cosh() - 1.0) / g;
    let mut x = t.last().r.x;
    if fault {
        x *= 1.0 + FAULT;
    }
    Check::at_most(
        "ray_linear_gradient",
        (x - exact).abs(),
        1e-8,
        format!("x(10) = {x:.12} vs closed form {exact:.12}"),
    )
}

pub fn rk4_order(fault: bool) -> Check {
    let g = 0.02;
    let m = linear_gradient(g);
    let init =
        RayState::launch(&m, Vec3::zeros(), Vec2::new(0.02, 0.0), 0.0).expect("inside the domain");
    let pz = init.p.z;
    let u0 = (0.02 / pz).asinh();
    let exact = (pz / g) * ((u0 + g * 20.0 / pz).cosh() - u0.cosh());
    let err = |h: f64| {
        let opts = TraceOptions {
            step: StepControl::Fixed(h),
            zeroth_order: true,
            ..TraceOptions::default()
        };
        (trace_ray(&m, &init, 100.0, 20.0, opts)
            .expect("trace stays paraxial")
            .last()
            .r
            .x
            - exact)
            .abs()
    };
    let (e1, e2) = (err(1.0), err(0.5));
    let mut order = (e1 / e2).log2();
    if fault {
        order -= 1.0;
    }
    Check::at_least(
        "rk4_order",
        order,
        3.9,
        format!("endpoint error {e1:.3e} at h = 1, {e2:.3e} at h = 0.5"),
    )
}

/// Straight sweep of `p_x` from 0 to 0.1 on the unit shell.
pub fn planar_path(count: usize) -> Trajectory {
    let samples = (0..count)
        .map(|i| {
            let px = 0.1 * i as f64 / (count - 1) as f64;
            RayState::at(i as f64, Vec3::new(px, 0.0, (1.0 - px * px).sqrt()), 1.0)
        })
        .collect();
    Trajectory::from_samples(samples).expect("z increases")
}

/// `∫₀ˣ du / (2(1 − u²)²)`
pub fn reduced_deflection_integral(x: f64) -> f64 {
    0.5 * (x / (2.0 * (1.0 - x * x)) + 0.25 * ((1.0 + x) / (1.0 - x)).ln())
}

pub fn spin_hall_quadrature(fault: bool) -> Check {
    let k = 100.0;
    let d = spin_hall_deflection(&planar_path(2001), k, 1.0);
    let exact = reduced_deflection_integral(0.1) / k;
    let mut y = d.y;
    if fault {
        y *= 1.0 + FAULT;
    }
    Check::at_most(
        "spin_hall_quadrature",
        ((y - exact) / exact).abs(),
        1e-6,
        format!("δr_y = {y:.9e} vs reduced integral {exact:.9e} (k = 100, Δp_x = 0.1, σ = +1)"),
    )
}

/// The quadrature along one path, evaluated for both helicities.
pub fn spin_hall_antisymmetry(fault: bool) -> Check {
    let m = linear_gradient(0.01);
    let opts = TraceOptions {
        zeroth_order: true,
        ..TraceOptions::default()
    };
    let run = |sigma: f64| {
        let init = RayState::launch(&m, Vec3::zeros(), Vec2::new(-0.05, 0.02), sigma)
            .expect("inside the domain");
        let t = trace_ray(&m, &init, 100.0, 10.0, opts).expect("trace stays paraxial");
        spin_hall_deflection(&t, 100.0, sigma)
    };
    let (plus, mut minus) = (run(1.0), run(-1.0));
    if fault {
        minus *= 1.0 + FAULT;
    }
    Check::at_most(
        "spin_hall_antisymmetry",
        (plus + minus).amax(),
        0.0,
        format!("δr(σ=+1) = ({:.6e}, {:.6e})", plus.x, plus.y),
    )
}

pub fn rytov_cone(fault: bool) -> Check {
    let theta: f64 = 0.05;
    let exact = 0.25 * theta.tan().powi(2) * TAU;
    let mut phase = berry_phase(
        &cone_loop(theta, 1.0, 0.0, TAU, 20001, 1.0).expect("valid loop"),
        1.0,
    );
    if fault {
        phase *= 1.0 + FAULT;
    }
    Check::at_most(
        "rytov_cone",
        ((phase - exact) / exact).abs(),
        1e-6,
        format!("∮𝒜·dp = {phase:.9e} vs ¼tan²θ·2π = {exact:.9e} at θ = 0.05"),
    )
}

pub fn propagator_vs_expm(seed: u64, count: usize, fault: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut worst = 0.0_f64;
    for i in 0..count {
        let set = build_matrices(i % 2 == 1);
        let p = random_p(&mut rng, 0.45);
        let k = rng.random_range(10.0..400.0);
        let dz = rng.random_range(1e-3..0.05);
        let kmat = set.beta() * (set.m_perp_dot(p) - Mat4::identity());
        let oracle = (kmat * Complex64::new(0.0, -k * dz)).exp();
        let mut m = kinetic_propagator(p, dz, k, 1.0, &set, false).expect("p below n0");
        if fault {
            m[(0, 0)] += Complex64::new(FAULT, 0.0);
        }
        worst = worst.max(max_abs(&(m - oracle)));
    }
    Check::at_most(
        "propagator_vs_expm",
        worst,
        1e-12,
        format!(
            "closed-form exp(−ik dz K) vs scaling-and-squaring exponential, {count} random modes"
        ),
    )
}

pub fn propagator_pseudo_unitarity(seed: u64, count: usize, fault: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let mut worst = 0.0_f64;
    for i in 0..count {
        let set = build_matrices(i % 2 == 1);
        let p = random_p(&mut rng, 0.45);
        let mut m = kinetic_propagator(p, rng.random_range(1e-3..0.05), 200.0, 1.0, &set, true)
            .expect("p below n0");
        if fault {
            m *= Complex64::new(1.0 + FAULT, 0.0);
        }
        worst = worst.max(max_abs(&(m.adjoint() * set.beta() * m - set.beta())));
    }
    Check::at_most(
        "propagator_pseudo_unitarity",
        worst,
        1e-13,
        format!("max |P†βP − β| over {count} random modes"),
    )
}

/// Runs every check; `fault` corrupts the named one.
pub fn run_verify(seed: u64, fault: Option<&str>) -> VerifyReport {
    let f = |name: &str| fault == Some(name);
    let checks = vec![
        clifford_identities(f("clifford_identities")),
        pseudo_hermiticity(seed, 1000, f("pseudo_hermiticity")),
        fw_diagonalization(seed, 1000, f("fw_diagonalization")),
        connection_exact_vs_fd(f("connection_exact_vs_fd")),
        connection_paraxial(f("connection_paraxial")),
        curvature_curl(f("curvature_curl")),
        commutator_h2_scaling(f("commutator_h2_scaling")),
        ray_linear_gradient(f("ray_linear_gradient")),
        rk4_order(f("rk4_order")),
        spin_hall_quadrature(f("spin_hall_quadrature")),
        spin_hall_antisymmetry(f("spin_hall_antisymmetry")),
        rytov_cone(f("rytov_cone")),
        propagator_vs_expm(seed, 1000, f("propagator_vs_expm")),
        propagator_pseudo_unitarity(seed, 1000, f("propagator_pseudo_unitarity")),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();
    VerifyReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        seed,
        passed: failed.is_empty(),
        failed,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_match_checks() {
        let report = run_verify(0, None);
        let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, CHECK_NAMES);
        for c in &report.checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn every_fault_is_detected() {
        for name in CHECK_NAMES {
            let report = run_verify(3, Some(name));
            assert_eq!(report.failed, vec![name.to_string()], "{name}");
        }
    }
}
