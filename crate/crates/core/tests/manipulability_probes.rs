use manip_core::manipulability::{
    default_horizons, estimate_gain_curve, hinf_point_mass, log_grid, point_mass_gain_curve, point_mass_response,
    velocity_manipulability_config, GainProbe, GrowthClass, OutputSelector, PointMass, PointMassOutput, ProbeInput,
};
use manip_core::sim::{presets, GainsSpec, IntegratorMode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn point_mass_first_integral(m in 0.2f64..3.0, b in 0.1f64..3.0, a in -3.0f64..3.0, w in 0.1f64..5.0, c in -2.0f64..2.0) {
        let pm = PointMass::new(m, b);
        let f = move |t: f64| a * (w * t).sin() + c / (t + 1.0);
        let tr = point_mass_response(&pm, &f, 30.0, 0.005).unwrap();
        for r in tr.first_integral_residual(&pm) {
            prop_assert!(r.abs() < 1e-8);
        }
        // Constant damping: ∫ b ẋ = b x.
        let k = tr.times.len() - 1;
        prop_assert!((tr.int_b_xdot[k] - b * tr.x[k]).abs() < 1e-8);
    }

    #[test]
    fn point_mass_gain_is_scale_invariant(scale in 0.1f64..10.0) {
        let pm = PointMass::new(1.0, 1.0);
        let h = [10.0, 30.0, 100.0];
        let base = point_mass_gain_curve(&pm, &ProbeInput::Harmonic { amplitude: 1.0, joint: 0 }, PointMassOutput::Position, &h, 0.01).unwrap();
        let scaled = point_mass_gain_curve(&pm, &ProbeInput::Harmonic { amplitude: scale, joint: 0 }, PointMassOutput::Position, &h, 0.01).unwrap();
        for (p, q) in base.points.iter().zip(&scaled.points) {
            prop_assert!((p.ratio - q.ratio).abs() < 1e-9 * p.ratio);
        }
    }
}

#[test]
fn time_varying_damping_keeps_the_first_integral() {
    let pm = PointMass { m: 1.0, damping: manip_core::manipulability::Damping::Sinusoidal { b0: 1.0, amplitude: 0.5, omega: 2.0 } };
    let tr = point_mass_response(&pm, &|t| 1.0 / (t + 1.0), 100.0, 0.005).unwrap();
    assert!(tr.first_integral_residual(&pm).iter().all(|r| r.abs() < 1e-8));
    assert!(*tr.x.last().unwrap() > 2.0);
}

#[test]
fn point_mass_probe_matches_frequency_response() {
    let pm = PointMass::new(1.0, 1.0);
    let hinf = hinf_point_mass(&pm, &log_grid(1e-6, 1e3, 400)).unwrap();
    let input = ProbeInput::default();
    let pos = point_mass_gain_curve(&pm, &input, PointMassOutput::Position, &default_horizons(), 0.01).unwrap();
    let vel = point_mass_gain_curve(&pm, &input, PointMassOutput::Velocity, &default_horizons(), 0.01).unwrap();
    assert!(hinf.position.infinite && pos.class == GrowthClass::InfiniteDeg1);
    assert!(!hinf.velocity.infinite && vel.class == GrowthClass::Finite);
    assert!(vel.points.iter().all(|p| p.ratio <= hinf.velocity.sup + 1e-9));
}

#[test]
fn teaching_probe_classification() {
    let inf = estimate_gain_curve(&presets::teaching(6.0), &GainProbe::position(0)).unwrap();
    assert_eq!(inf.class, GrowthClass::InfiniteDeg1);
    assert!(inf.ratio_at(1000.0).unwrap() / inf.ratio_at(10.0).unwrap() > 3.0);
    let fin = estimate_gain_curve(&presets::teaching(0.0), &GainProbe::position(0)).unwrap();
    assert_eq!(fin.class, GrowthClass::Finite);
    assert!(fin.ratio_at(1000.0).unwrap() / fin.ratio_at(10.0).unwrap() < 1.2);
}

#[test]
fn classification_stable_across_integrators() {
    for (lm, want) in [(6.0, GrowthClass::InfiniteDeg1), (0.0, GrowthClass::Finite)] {
        let mut sc = presets::teaching(lm);
        sc.integrator = IntegratorMode::PaperEuler;
        assert_eq!(estimate_gain_curve(&sc, &GainProbe::position(0)).unwrap().class, want);
    }
}

#[test]
fn classification_stable_across_seeds_on_networks() {
    for seed in [0, 1, 2] {
        let mut sc = presets::consensus_switching(10.0, seed);
        sc.set_seed(seed);
        let probe = GainProbe {
            input: ProbeInput::default(),
            robot: 2,
            output: OutputSelector::QCentroid,
            horizons: vec![10.0, 30.0, 100.0],
        };
        let c = estimate_gain_curve(&sc, &probe).unwrap();
        assert_eq!(c.class, GrowthClass::InfiniteDeg1, "seed {seed}: {c:?}");
    }
}

#[test]
fn velocity_output_is_integrated_when_alpha_is_zero() {
    let mut sc = presets::teaching(6.0);
    sc.gains = GainsSpec::Shared(velocity_manipulability_config(sc.gains.for_robot(0)));
    // The spin-up under the harmonic probe outgrows the 5 ms hold past a few hundred seconds.
    let probe = GainProbe { horizons: vec![10.0, 30.0, 100.0, 300.0], ..GainProbe::velocity(0) };
    let c = estimate_gain_curve(&sc, &probe).unwrap();
    assert_eq!(c.class, GrowthClass::InfiniteDeg1, "{c:?}");
    // Position outputs need α > 0.
    assert!(estimate_gain_curve(&sc, &GainProbe::position(0)).is_err());
}

#[test]
fn constant_probe_rejected() {
    let probe = GainProbe { input: ProbeInput::Constant { amplitude: 1.0, joint: 0 }, ..GainProbe::position(0) };
    assert!(estimate_gain_curve(&presets::teaching(6.0), &probe).is_err());
}
