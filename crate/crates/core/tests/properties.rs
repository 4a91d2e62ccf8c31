use num_complex::Complex64;
use paraxial_core::clifford::{
    build_matrices, hamiltonian_matrix, pseudo_hermiticity_residual, HamiltonianSymbol,
};
use paraxial_core::fw::{berry_curvature, fw_matrix, projected_connection};
use paraxial_core::medium::{Bounds, MediumKind, MediumProfile, SampledField};
use paraxial_core::transport::{spin_hall_deflection, trace_ray, RayState, TraceOptions};
use paraxial_core::wave::{kinetic_propagator, stability_margin};
use paraxial_core::{Mat4, Vec2, Vec3};
use proptest::prelude::*;

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn p_perp(limit: f64) -> impl Strategy<Value = Vec2> {
    (0.0..limit, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| Vec2::new(r * a.cos(), r * a.sin()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generator_is_pseudo_hermitian(p in p_perp(0.9), zeta in -0.1..0.1f64, conj: bool) {
        let set = build_matrices(conj);
        let h = hamiltonian_matrix(&HamiltonianSymbol { n0: 1.0, zeta, p_perp: p }, &set).unwrap();
        prop_assert!(pseudo_hermiticity_residual(&h, &set) <= 1e-13);
    }

    #[test]
    fn fw_transform_block_diagonalizes(p in p_perp(0.9), n0 in 1.0..1.6f64, conj: bool) {
        let set = build_matrices(conj);
        let fw = fw_matrix(p * n0, n0, &set).unwrap();
        prop_assert!(fw.off_block_residual(&set) <= 1e-12);
        prop_assert!(max_abs(&(fw.inverse * fw.matrix - Mat4::identity())) <= 1e-12);
    }

    #[test]
    fn curvature_is_curl_of_projected_connection(p in p_perp(0.5), sigma in prop_oneof![Just(1.0), Just(-1.0)]) {
        let p3 = Vec3::new(p.x, p.y, (1.0 - p.norm_squared()).sqrt());
        let h = 1e-5;
        let d = |axis: usize| {
            let mut e = Vec3::zeros();
            e[axis] = h;
            (projected_connection(p3 + e, sigma).unwrap() - projected_connection(p3 - e, sigma).unwrap()) / (2.0 * h)
        };
        let (dx, dy, dz) = (d(0), d(1), d(2));
        let curl = Vec3::new(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x);
        let b = berry_curvature(p3).unwrap();
        prop_assert!((curl - b * sigma).amax() <= 1e-8);
    }

    #[test]
    fn kinetic_steps_compose(p in p_perp(0.45), dz1 in 0.001..0.03f64, dz2 in 0.001..0.03f64, conj: bool) {
        let set = build_matrices(conj);
        let k = 150.0;
        let a = kinetic_propagator(p, dz1, k, 1.0, &set, true).unwrap();
        let b = kinetic_propagator(p, dz2, k, 1.0, &set, true).unwrap();
        let ab = kinetic_propagator(p, dz1 + dz2, k, 1.0, &set, true).unwrap();
        prop_assert!(max_abs(&(a * b - ab)) <= 1e-12);
        prop_assert!(max_abs(&(a.adjoint() * set.beta() * a - set.beta())) <= 1e-13);
        prop_assert!((a.determinant() - Complex64::from_polar(1.0, -4.0 * k * dz1)).norm() <= 1e-11);
    }

    #[test]
    fn stability_margin_shrinks_with_band(dz in 0.005..0.03f64, cut in 0.1..0.4f64) {
        let narrow = stability_margin(200.0, dz, 1.0, cut, [-0.02, 0.02]).unwrap();
        let wide = stability_margin(200.0, dz, 1.0, cut + 0.05, [-0.02, 0.02]).unwrap();
        prop_assert!(wide.margin <= narrow.margin + 1e-12);
    }

    #[test]
    fn gridded_trilinear_reproduces_linear_fields(a in -0.02..0.02f64, b in -0.02..0.02f64, c in -0.01..0.01f64,
                                                  x in -0.8..0.8f64, y in -0.8..0.8f64, z in 0.3..1.7f64) {
        let f = SampledField::from_fn([9, 9, 5], [0.25, 0.25, 0.5], [-1.0, -1.0, 0.0], |r| a * r.x + b * r.y + c * r.z).unwrap();
        let prof = MediumProfile::new(1.0, MediumKind::Gridded3d(f), Bounds::unbounded()).unwrap();
        let r = Vec3::new(x, y, z);
        prop_assert!((prof.zeta_at(r).unwrap() - (a * x + b * y + c * z)).abs() <= 1e-14);
        let g = prof.grad_index(r).unwrap();
        prop_assert!((g - Vec3::new(a, b, c)).norm() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spin_hall_deflection_is_odd_in_sigma(gx in -0.01..0.01f64, gy in -0.01..0.01f64, px in -0.1..0.1f64, k in 20.0..400.0f64) {
        let profile = MediumProfile::new(1.0, MediumKind::LinearGradient { g: Vec2::new(gx, gy) }, Bounds::transverse(3.0).unwrap()).unwrap();
        let opts = TraceOptions { zeroth_order: true, ..TraceOptions::default() };
        let run = |sigma: f64| {
            let init = RayState::launch(&profile, Vec3::zeros(), Vec2::new(px, 0.0), sigma).unwrap();
            let traj = trace_ray(&profile, &init, k, 3.0, opts).unwrap();
            spin_hall_deflection(&traj, k, sigma)
        };
        let (plus, minus) = (run(1.0), run(-1.0));
        prop_assert_eq!(plus, -minus);
    }
}
