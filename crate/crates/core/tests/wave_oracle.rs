use std::f64::consts::PI;

use paraxial_core::medium::{Bounds, MediumKind, MediumProfile};
use paraxial_core::transport::{grin_helix_launch, trace_ray, RayState, TraceOptions};
use paraxial_core::wave::{
    init_gaussian_beam, momentum_centroid, run_pair, rytov_measurement, BeamSpec, GridGeometry,
    PropagationConfig, Propagator,
};
use paraxial_core::{Helicity, Vec2, Vec3};

fn linear(g: f64, half: f64) -> MediumProfile {
    MediumProfile::new(
        1.0,
        MediumKind::LinearGradient {
            g: Vec2::new(g, 0.0),
        },
        Bounds::transverse(half).unwrap(),
    )
    .unwrap()
}

#[test]
fn momentum_drift_follows_index_gradient() {
    let (k, g) = (200.0, 0.01);
    let geom = GridGeometry::square(128, 8.0).unwrap();
    let profile = linear(g, 4.0);
    let cfg = PropagationConfig::new(k, 1.0, 3.0 * PI / (2.0 * k));
    let spec = BeamSpec::new(0.5, Helicity::Plus);
    let mut field = init_gaussian_beam(&spec, geom, &cfg).unwrap();
    let prop = Propagator::new(geom, &profile, cfg, field.set).unwrap();
    let p0 = momentum_centroid(&field, Helicity::Plus, k).unwrap();
    let steps = 400;
    for _ in 0..steps {
        prop.step(&mut field).unwrap();
    }
    let z = field.z;
    let p1 = momentum_centroid(&field, Helicity::Plus, k).unwrap();

    let opts = TraceOptions {
        zeroth_order: true,
        ..TraceOptions::default()
    };
    let init = RayState::launch(&profile, Vec3::zeros(), Vec2::zeros(), 1.0).unwrap();
    let ray = trace_ray(&profile, &init, k, z, opts).unwrap();
    let expected = ray.last().p.x;
    let measured = p1.x - p0.x;
    assert!(
        ((measured - expected) / expected).abs() <= 0.01,
        "{measured} vs {expected}"
    );
    assert!((p1.y - p0.y).abs() <= 1e-3 * expected.abs());
}

#[test]
fn homogeneous_pair_has_no_rotation() {
    let k = 100.0;
    let geom = GridGeometry::square(64, 3.2).unwrap();
    let profile = MediumProfile::homogeneous(1.0).unwrap();
    let cfg = PropagationConfig::new(k, 1.0, 3.0 * PI / (2.0 * k));
    let run = run_pair(
        &profile,
        &BeamSpec::new(0.4, Helicity::Plus),
        geom,
        cfg,
        100.0 * cfg.dz,
        10,
        None,
    )
    .unwrap();
    let rot = rytov_measurement(&run.probes);
    assert!(
        rot.rotation.iter().all(|r| r.abs() < 1e-12),
        "{:?}",
        rot.rotation
    );
    for p in &run.probes {
        assert!((p.cy_plus + p.cy_minus).abs() < 1e-12);
    }
}

#[test]
fn l2_drift_is_small_for_a_paraxial_band() {
    let k = 200.0;
    let geom = GridGeometry::square(128, 8.0).unwrap();
    let mut cfg = PropagationConfig::new(k, 1.0, 3.0 * PI / (2.0 * k));
    cfg.mask.fraction = 0.0;
    let spec = BeamSpec {
        tilt: Vec2::new(-0.1, 0.0),
        ..BeamSpec::new(0.5, Helicity::Plus)
    };
    let run =
        paraxial_core::wave::run_scenario(&linear(0.01, 4.0), &spec, geom, cfg, 300.0 * cfg.dz, 50)
            .unwrap();
    let l0 = run.probes[0].l2_norm;
    for p in &run.probes {
        // O(p⊥²) of the occupied band, |p⊥| ≈ 0.1.
        assert!(((p.l2_norm - l0) / l0).abs() <= 0.02, "{} {l0}", p.l2_norm);
    }
}

fn helix_rotation(handedness: f64) -> f64 {
    let (k, alpha, theta) = (100.0, 0.1, 0.1);
    let launch = grin_helix_launch(alpha, 1.0, theta, handedness).unwrap();
    let profile = MediumProfile::new(
        1.0,
        MediumKind::ParabolicGrin {
            alpha,
            center: Vec2::zeros(),
        },
        Bounds::transverse(3.0).unwrap(),
    )
    .unwrap();
    let geom = GridGeometry::square(128, 6.0).unwrap();
    let dz = 3.0 * PI / (2.0 * k);
    let cfg = PropagationConfig::new(k, 1.0, dz);
    let spec = BeamSpec {
        center: Vec2::new(launch.r.x, launch.r.y),
        tilt: Vec2::new(launch.p.x, launch.p.y),
        ..BeamSpec::new((2.0 / (k * alpha)).sqrt(), Helicity::Plus)
    };
    let steps = (0.25 * launch.period / dz).round();
    let run = run_pair(&profile, &spec, geom, cfg, steps * dz, 20, None).unwrap();
    let rot = rytov_measurement(&run.probes);
    assert!(rot.ambiguous.is_empty());
    rot.final_rotation()
}

#[test]
fn reversed_helix_negates_rotation() {
    let (right, left) = (helix_rotation(1.0), helix_rotation(-1.0));
    assert!(right.abs() > 1e-4, "{right}");
    assert!(((right + left) / right).abs() <= 0.05, "{right} {left}");
}
