use manip_core::dynamics::{coriolis, forward_dynamics, inertia, kinetic_energy, regressor, DynParams, JointState};
use manip_core::ode::rk4_step;
use nalgebra::{Vector2, Vector4};
use proptest::prelude::*;
use std::f64::consts::PI;

fn vec2(range: std::ops::Range<f64>) -> impl Strategy<Value = Vector2<f64>> {
    (range.clone(), range).prop_map(|(a, b)| Vector2::new(a, b))
}

fn params() -> impl Strategy<Value = DynParams> {
    prop_oneof![
        Just(DynParams::default()),
        (0.2f64..5.0, 0.3f64..2.0).prop_map(|(m, l)| DynParams::uniform_rods(m, l).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn inertia_symmetric_positive_definite(q in vec2(-PI..PI), p in params()) {
        let m = inertia(&q, &p);
        prop_assert_eq!(m, m.transpose());
        prop_assert!(m.symmetric_eigenvalues().min() >= p.inertia_eigen_floor() - 1e-12);
    }

    #[test]
    fn mdot_minus_two_c_is_skew(q in vec2(-PI..PI), qd in vec2(-3.0..3.0), p in params()) {
        let eps = 1e-6;
        let mdot = (inertia(&(q + qd * eps), &p) - inertia(&(q - qd * eps), &p)) / (2.0 * eps);
        let n = mdot - coriolis(&q, &qd, &p) * 2.0;
        prop_assert!((n + n.transpose()).amax() < 1e-8, "{}", n + n.transpose());
    }

    #[test]
    fn regressor_identity(
        q in vec2(-PI..PI), qd in vec2(-3.0..3.0), zeta in vec2(-3.0..3.0), zetad in vec2(-10.0..10.0), p in params()
    ) {
        let lhs = regressor(&q, &qd, &zeta, &zetad) * p.theta();
        let rhs = inertia(&q, &p) * zetad + coriolis(&q, &qd, &p) * zeta;
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn forward_dynamics_round_trip(q in vec2(-PI..PI), qd in vec2(-3.0..3.0), tau in vec2(-20.0..20.0), p in params()) {
        let st = JointState::new(q, qd);
        let qdd = forward_dynamics(&st, &tau, &p).unwrap();
        let back = regressor(&q, &qd, &qd, &qdd) * p.theta();
        prop_assert!((back - tau).amax() < 1e-9);
    }
}

#[test]
fn free_motion_conserves_kinetic_energy() {
    let p = DynParams::default();
    for (q0, v0) in [([0.3, -1.1], [1.0, -1.0]), ([2.0, 0.1], [-0.4, 2.5]), ([0.0, 0.0], [0.8, 0.3])] {
        let mut f = |_t: f64, x: &Vector4<f64>| {
            let st = JointState::new(Vector2::new(x[0], x[1]), Vector2::new(x[2], x[3]));
            let a = forward_dynamics(&st, &Vector2::zeros(), &p).unwrap();
            Vector4::new(x[2], x[3], a[0], a[1])
        };
        let mut x = Vector4::new(q0[0], q0[1], v0[0], v0[1]);
        let energy = |x: &Vector4<f64>| {
            kinetic_energy(&JointState::new(Vector2::new(x[0], x[1]), Vector2::new(x[2], x[3])), &p)
        };
        let e0 = energy(&x);
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        for k in 0..10_000 {
            x = rk4_step(&mut f, k as f64 * h, &x, h);
            worst = worst.max((energy(&x) - e0).abs());
        }
        assert!(worst < 1e-6, "energy drift {worst:e}");
    }
}
