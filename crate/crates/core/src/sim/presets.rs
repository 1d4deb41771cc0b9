//! Canned scenarios for the single-arm teaching task, six-arm consensus
//! (switching and delayed) and bilateral teleoperation.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use super::{
    ControllerKind, EnvironmentModel, GainsSpec, InitialCondition, IntegratorMode, OperatorModel, Scenario,
    ScheduleSpec,
};
use crate::controllers::GainSet;
use crate::dynamics::{ArmModel, DynParams};
use crate::network::{fixture_triple, DelayModel, SwitchingMode};

/// Arm-level presets; `pointmass` lives with the manipulability benchmark.
pub const ARM_PRESETS: [&str; 6] =
    ["teaching_lm6", "teaching_lm0", "consensus_switching", "consensus_delayed", "teleop_lm10", "teleop_lm1"];

pub const OPERATOR_KD: f64 = 5.0;
pub const OPERATOR_KP: f64 = 10.0;

pub fn operator_target() -> Vector2<f64> {
    Vector2::new(3.5, 3.0)
}

/// Initial joint positions of the six networked arms.
pub fn consensus_positions() -> [Vector2<f64>; 6] {
    [
        Vector2::new(-PI / 3.0, -PI / 2.0),
        Vector2::new(-2.0 * PI / 3.0, PI / 3.0),
        Vector2::new(5.0 * PI / 6.0, -PI / 3.0),
        Vector2::new(PI / 6.0, PI / 2.0),
        Vector2::new(PI / 2.0, PI / 6.0),
        Vector2::new(-PI / 6.0, -PI / 3.0),
    ]
}

/// Link mass of the six networked arms. Lighter links are too agile for
/// `K = 16`, `Γ = 8` under a 5 ms hold once the graph switches.
pub const NETWORK_LINK_MASS: f64 = 2.0;

fn network_arm() -> DynParams {
    DynParams::uniform_rods(NETWORK_LINK_MASS, 1.0).expect("positive mass")
}

fn arms(n: usize, params: DynParams) -> Vec<ArmModel> {
    (1..=n).map(|i| ArmModel::new(format!("arm{i}"), params)).collect()
}

fn gains(k: f64, gamma: f64, alpha: f64, lambda_m: f64) -> GainSet {
    GainSet::new(k, gamma, alpha, lambda_m)
}

/// One arm taught by a PD operator from rest at the origin.
pub fn teaching(lambda_m: f64) -> Scenario {
    Scenario {
        name: format!("teaching_lm{lambda_m}"),
        robots: arms(1, DynParams::default()),
        controller: ControllerKind::SingleAdaptive,
        gains: GainsSpec::Shared(gains(16.0, 8.0, 2.0, lambda_m)),
        schedule: None,
        delay_model: None,
        operator: OperatorModel::pd(OPERATOR_KD, OPERATOR_KP, operator_target(), 0),
        environment: EnvironmentModel::None,
        initial_conditions: vec![InitialCondition::at_rest(Vector2::zeros())],
        control_period: 0.005,
        integrator: IntegratorMode::Rk4,
        rk4_substep: 0.001,
        horizon: 60.0,
        seed: 0,
    }
}

/// Six arms over the three-graph switching fixture, operator on the third.
pub fn consensus_switching(lambda_m: f64, seed: u64) -> Scenario {
    Scenario {
        name: "consensus_switching".into(),
        robots: arms(6, network_arm()),
        controller: ControllerKind::Networked,
        gains: GainsSpec::Shared(gains(16.0, 8.0, 1.6, lambda_m)),
        schedule: Some(ScheduleSpec::RandomSwitching {
            graphs: fixture_triple().to_vec(),
            period: 0.15,
            mode: SwitchingMode::Uniform,
        }),
        delay_model: None,
        operator: OperatorModel::pd(OPERATOR_KD, OPERATOR_KP, operator_target(), 2),
        environment: EnvironmentModel::None,
        initial_conditions: consensus_positions().into_iter().map(InitialCondition::at_rest).collect(),
        control_period: 0.005,
        integrator: IntegratorMode::Rk4,
        rk4_substep: 0.001,
        horizon: 60.0,
        seed,
    }
}

/// Switching consensus with jittered communication delays.
pub fn consensus_delayed(seed: u64) -> Scenario {
    let mut sc = consensus_switching(10.0, seed);
    sc.name = "consensus_delayed".into();
    sc.controller = ControllerKind::NetworkedDelayed;
    sc.gains = GainsSpec::Shared(gains(16.0, 1.0, 1.6, 10.0));
    sc.delay_model = Some(DelayModel::jittered(seed));
    sc.horizon = 120.0;
    sc
}

/// Master (index 0, operated) and slave (index 1) over delayed links.
pub fn teleop(lambda_m: f64, seed: u64) -> Scenario {
    let q0 = consensus_positions();
    Scenario {
        name: format!("teleop_lm{lambda_m}"),
        robots: vec![
            ArmModel::new("master", DynParams::default()),
            ArmModel::new("slave", DynParams::default()),
        ],
        controller: ControllerKind::Teleop,
        gains: GainsSpec::Shared(gains(16.0, 1.0, 0.5, lambda_m).with_lambda(2.0)),
        schedule: None,
        delay_model: Some(DelayModel::jittered(seed)),
        operator: OperatorModel::pd(OPERATOR_KD, OPERATOR_KP, operator_target(), 0),
        environment: EnvironmentModel::None,
        initial_conditions: vec![InitialCondition::at_rest(q0[0]), InitialCondition::at_rest(q0[1])],
        control_period: 0.005,
        integrator: IntegratorMode::Rk4,
        rk4_substep: 0.001,
        horizon: 120.0,
        seed,
    }
}

/// Rest position of the slave-side spring environment.
pub fn spring_rest() -> Vector2<f64> {
    Vector2::new(3.0, 2.5)
}

/// Teleoperation with the slave pressing on a stiff spring.
pub fn teleop_spring(seed: u64) -> Scenario {
    let mut sc = teleop(10.0, seed);
    sc.name = "teleop_spring".into();
    sc.environment = EnvironmentModel::Spring { ke: Matrix2::identity() * 20.0, q_e: spring_rest(), robot: 1 };
    sc.horizon = 200.0;
    sc
}

pub fn by_name(name: &str) -> Option<Scenario> {
    Some(match name {
        "teaching_lm6" => teaching(6.0),
        "teaching_lm0" => teaching(0.0),
        "teaching_lm2" => teaching(2.0),
        "consensus_switching" => consensus_switching(10.0, 0),
        "consensus_switching_lm0" => consensus_switching(0.0, 0),
        "consensus_delayed" => consensus_delayed(0),
        "teleop_lm10" => teleop(10.0, 0),
        "teleop_lm1" => teleop(1.0, 0),
        "teleop_spring" => teleop_spring(0),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in ARM_PRESETS.iter().chain(&["teaching_lm2", "consensus_switching_lm0", "teleop_spring"]) {
            let sc = by_name(name).unwrap_or_else(|| panic!("{name}"));
            sc.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(by_name("nope").is_none());
    }
}
