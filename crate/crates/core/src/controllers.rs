//! Control laws: damping control, single-arm dynamic-feedback adaptive
//! control, networked (undelayed and delayed) coupling, and the two-robot
//! teleoperation specialization.
//!
//! Every adaptive variant shares the same torque and adaptation law
//!
//! ```text
//! s = q̇ − z,   τ = −K s + Y(q, q̇, z, ż) ϑ̂,   ϑ̂̇ = −Γ Yᵀ(q, q̇, z, ż) s
//! ```
//!
//! and differs only in how the reference acceleration `ż` is generated. `ż`
//! never depends on `τ`, so it is evaluated first and then fed to `Y`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{inertia, regressor, DynParams, JointState};
use crate::network::{DiGraph, NetworkError};
use crate::serde_util;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("{0} must be symmetric positive definite")]
    NotSpd(&'static str),
    #[error("{name} = {value} out of range ({rule})")]
    OutOfRange { name: &'static str, value: f64, rule: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    #[serde(with = "serde_util::mat2")]
    pub k: Matrix2<f64>,
    #[serde(with = "serde_util::mat3")]
    pub gamma: Matrix3<f64>,
    pub alpha: f64,
    pub lambda_m: f64,
    /// Teleoperation coupling weight; unused by the other laws.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

fn is_spd2(m: &Matrix2<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && *m == m.transpose() && m.cholesky().is_some()
}

fn is_spd3(m: &Matrix3<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && *m == m.transpose() && m.cholesky().is_some()
}

impl GainSet {
    pub fn new(k: f64, gamma: f64, alpha: f64, lambda_m: f64) -> Self {
        Self {
            k: Matrix2::identity() * k,
            gamma: Matrix3::identity() * gamma,
            alpha,
            lambda_m,
            lambda: default_lambda(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// `α = 0` is accepted: it is the velocity-manipulability configuration.
    pub fn validate(&self) -> Result<(), GainError> {
        if !is_spd2(&self.k) {
            return Err(GainError::NotSpd("K"));
        }
        if !is_spd3(&self.gamma) {
            return Err(GainError::NotSpd("Γ"));
        }
        let ranges = [
            ("alpha", self.alpha, self.alpha >= 0.0, "α ≥ 0"),
            ("lambda_m", self.lambda_m, self.lambda_m >= 0.0, "λ_M ≥ 0"),
            ("lambda", self.lambda, self.lambda > 0.0, "λ > 0"),
        ];
        for (name, value, ok, rule) in ranges {
            if !(ok && value.is_finite()) {
                return Err(GainError::OutOfRange { name, value, rule });
            }
        }
        Ok(())
    }
}

/// Controller memory of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveState {
    #[serde(with = "serde_util::vec2")]
    pub z: Vector2<f64>,
    #[serde(with = "serde_util::vec3")]
    pub theta_hat: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub tau: Vector2<f64>,
    pub zdot: Vector2<f64>,
    pub theta_hat_dot: Vector3<f64>,
    pub s: Vector2<f64>,
}

/// `ξ = q̇ + α q`.
pub fn sliding_xi(state: &JointState, alpha: f64) -> Vector2<f64> {
    state.qdot + state.q * alpha
}

/// `τ = −α q̇` (gravity-free arm, so no compensation term).
pub fn damping_control(state: &JointState, alpha: f64) -> Vector2<f64> {
    -state.qdot * alpha
}

/// `ż = −α q̇ + λ_M (q̇ − z)`.
pub fn single_zdot(state: &JointState, z: &Vector2<f64>, gains: &GainSet) -> Vector2<f64> {
    -state.qdot * gains.alpha + (state.qdot - z) * gains.lambda_m
}

/// Torque and adaptation law for a given reference acceleration.
pub fn adaptive_law(
    state: &JointState,
    ctrl: &AdaptiveState,
    zdot: Vector2<f64>,
    gains: &GainSet,
) -> ControlOutput {
    let s = state.qdot - ctrl.z;
    let y = regressor(&state.q, &state.qdot, &ctrl.z, &zdot);
    ControlOutput {
        tau: -gains.k * s + y * ctrl.theta_hat,
        zdot,
        theta_hat_dot: -gains.gamma * y.transpose() * s,
        s,
    }
}

pub fn single_adaptive_step(state: &JointState, ctrl: &AdaptiveState, gains: &GainSet) -> ControlOutput {
    adaptive_law(state, ctrl, single_zdot(state, &ctrl.z, gains), gains)
}

fn coupling<I>(xi_i: Vector2<f64>, neighbors: I) -> Vector2<f64>
where
    I: IntoIterator<Item = (f64, Vector2<f64>)>,
{
    neighbors
        .into_iter()
        .fold(Vector2::zeros(), |acc, (w, xi_j)| acc + (xi_i - xi_j) * w)
}

/// Reference acceleration of robot `i` with undelayed neighbor coupling.
pub fn networked_zdot(
    i: usize,
    states: &[JointState],
    z_i: &Vector2<f64>,
    gains: &GainSet,
    graph: &DiGraph,
) -> Vector2<f64> {
    let xi_i = sliding_xi(&states[i], gains.alpha);
    let c = coupling(
        xi_i,
        graph.neighbors(i).map(|(j, w)| (w, sliding_xi(&states[j], gains.alpha))),
    );
    single_zdot(&states[i], z_i, gains) - c
}

/// Access to delayed neighbor signals `ξ_j(t − T_ij(t))`.
pub trait DelayedSignal {
    fn delayed_xi(&self, receiver: usize, sender: usize, t: f64) -> Result<Vector2<f64>, NetworkError>;
}

impl<F> DelayedSignal for F
where
    F: Fn(usize, usize, f64) -> Vector2<f64>,
{
    fn delayed_xi(&self, receiver: usize, sender: usize, t: f64) -> Result<Vector2<f64>, NetworkError> {
        Ok(self(receiver, sender, t))
    }
}

/// Reference acceleration of robot `i` coupled to delayed neighbor samples.
pub fn delayed_networked_zdot<R: DelayedSignal + ?Sized>(
    i: usize,
    state_i: &JointState,
    z_i: &Vector2<f64>,
    gains: &GainSet,
    graph: &DiGraph,
    xi_reader: &R,
    t: f64,
) -> Result<Vector2<f64>, NetworkError> {
    let xi_i = sliding_xi(state_i, gains.alpha);
    let mut c = Vector2::zeros();
    for (j, w) in graph.neighbors(i) {
        c += (xi_i - xi_reader.delayed_xi(i, j, t)?) * w;
    }
    Ok(single_zdot(state_i, z_i, gains) - c)
}

/// Master/slave reference accelerations with scalar coupling `λ`.
pub fn teleop_zdot_pair<R: DelayedSignal + ?Sized>(
    states: &[JointState; 2],
    z: &[Vector2<f64>; 2],
    gains: &GainSet,
    xi_reader: &R,
    t: f64,
) -> Result<[Vector2<f64>; 2], NetworkError> {
    let pair = DiGraph::from_edges(2, &[(0, 1, gains.lambda), (1, 0, gains.lambda)])
        .expect("λ validated positive");
    Ok([
        delayed_networked_zdot(0, &states[0], &z[0], gains, &pair, xi_reader, t)?,
        delayed_networked_zdot(1, &states[1], &z[1], gains, &pair, xi_reader, t)?,
    ])
}

/// `V = ½ sᵀ M(q) s + ½ Δϑᵀ Γ⁻¹ Δϑ`.
pub fn lyapunov(state: &JointState, ctrl: &AdaptiveState, gains: &GainSet, params: &DynParams) -> f64 {
    let s = state.qdot - ctrl.z;
    let dtheta = ctrl.theta_hat - params.theta();
    let gamma_inv = gains.gamma.try_inverse().expect("Γ validated positive definite");
    0.5 * s.dot(&(inertia(&state.q, params) * s)) + 0.5 * dtheta.dot(&(gamma_inv * dtheta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::coriolis;
    use approx::assert_abs_diff_eq;

    fn gains() -> GainSet {
        GainSet::new(16.0, 8.0, 2.0, 6.0)
    }

    #[test]
    fn xi_and_damping() {
        let s = JointState::new(Vector2::new(1.0, 2.0), Vector2::zeros());
        assert_eq!(sliding_xi(&s, 2.0), Vector2::new(2.0, 4.0));
        assert_eq!(sliding_xi(&JointState::default(), 2.0), Vector2::zeros());
        let scaled = JointState::new(s.q * 3.0, Vector2::new(0.5, -1.0) * 3.0);
        let base = JointState::new(s.q, Vector2::new(0.5, -1.0));
        assert_abs_diff_eq!(sliding_xi(&scaled, 1.6), sliding_xi(&base, 1.6) * 3.0, epsilon = 1e-14);

        let v = JointState::new(Vector2::zeros(), Vector2::new(1.0, -2.0));
        assert_eq!(damping_control(&v, 2.0), Vector2::new(-2.0, 4.0));
        assert_eq!(damping_control(&JointState::default(), 2.0), Vector2::zeros());
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let st = JointState::new(Vector2::new(0.3, -0.8), Vector2::zeros());
        let ctrl = AdaptiveState { z: Vector2::zeros(), theta_hat: Vector3::new(3.0, -1.0, 0.2) };
        let out = single_adaptive_step(&st, &ctrl, &gains());
        assert_eq!(out.s, Vector2::zeros());
        assert_eq!(out.zdot, Vector2::zeros());
        assert_eq!(out.tau, Vector2::zeros());
        assert_eq!(out.theta_hat_dot, Vector3::zeros());
    }

    #[test]
    fn perfect_estimate_gives_reference_inverse_dynamics() {
        let p = DynParams::default();
        let st = JointState::new(Vector2::new(0.4, 1.1), Vector2::new(0.7, -0.3));
        let ctrl = AdaptiveState { z: st.qdot, theta_hat: *p.theta() };
        let out = single_adaptive_step(&st, &ctrl, &gains());
        let expect = inertia(&st.q, &p) * out.zdot + coriolis(&st.q, &st.qdot, &p) * ctrl.z;
        assert_abs_diff_eq!(out.tau, expect, epsilon = 1e-12);
        assert_eq!(out.s, Vector2::zeros());
    }

    #[test]
    fn adaptation_energy_flow_cancels() {
        let p = DynParams::default();
        let g = GainSet { gamma: Matrix3::new(4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0), ..gains() };
        let st = JointState::new(Vector2::new(-0.4, 2.1), Vector2::new(1.7, -0.6));
        let ctrl = AdaptiveState { z: Vector2::new(0.2, 0.9), theta_hat: Vector3::new(0.5, 0.1, -0.3) };
        let out = single_adaptive_step(&st, &ctrl, &g);
        let y = regressor(&st.q, &st.qdot, &ctrl.z, &out.zdot);
        let dtheta = ctrl.theta_hat - p.theta();
        let flow = out.s.dot(&(y * dtheta)) + out.theta_hat_dot.dot(&(g.gamma.try_inverse().unwrap() * dtheta));
        assert!(flow.abs() < 1e-12, "{flow}");
    }

    #[test]
    fn zero_lambda_m_is_pure_integral_reference() {
        let g = GainSet { lambda_m: 0.0, ..gains() };
        let st = JointState::new(Vector2::new(0.1, 0.2), Vector2::new(0.3, -0.4));
        let z = Vector2::new(5.0, -7.0);
        assert_eq!(single_zdot(&st, &z, &g), -st.qdot * g.alpha);
        assert_eq!(single_zdot(&st, &Vector2::zeros(), &g), single_zdot(&st, &z, &g));
    }

    #[test]
    fn gain_validation() {
        assert!(gains().validate().is_ok());
        assert!(GainSet { alpha: 0.0, ..gains() }.validate().is_ok());
        assert!(GainSet { lambda_m: 0.0, ..gains() }.validate().is_ok());
        assert_eq!(GainSet::new(-1.0, 8.0, 2.0, 6.0).validate(), Err(GainError::NotSpd("K")));
        let asym = GainSet { k: Matrix2::new(16.0, 1.0, 0.0, 16.0), ..gains() };
        assert_eq!(asym.validate(), Err(GainError::NotSpd("K")));
        assert!(GainSet::new(16.0, 0.0, 2.0, 6.0).validate().is_err());
        assert!(GainSet { alpha: -1.0, ..gains() }.validate().is_err());
        assert!(GainSet { lambda: 0.0, ..gains() }.validate().is_err());
    }

    #[test]
    fn identical_robots_decouple() {
        let g = DiGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let st = JointState::new(Vector2::new(0.5, 0.1), Vector2::new(0.2, 0.3));
        let states = [st; 3];
        for i in 0..3 {
            assert_abs_diff_eq!(networked_zdot(i, &states, &st.qdot, &gains(), &g), -st.qdot * 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn no_neighbors_reduces_to_single() {
        let states = [
            JointState::new(Vector2::new(0.5, 0.1), Vector2::new(0.2, 0.3)),
            JointState::new(Vector2::new(-1.0, 2.0), Vector2::new(1.0, 1.0)),
        ];
        let z = Vector2::new(0.4, -0.1);
        let g = DiGraph::empty(2);
        assert_eq!(networked_zdot(0, &states, &z, &gains(), &g), single_zdot(&states[0], &z, &gains()));
    }

    #[test]
    fn two_robot_coupling_by_hand() {
        // α = 2, λ_M = 6, w_12 = 1.
        let g = DiGraph::from_pairs(2, &[(0, 1)]).unwrap();
        let states = [
            JointState::new(Vector2::new(1.0, 0.0), Vector2::new(0.5, 0.0)),
            JointState::new(Vector2::new(0.0, 1.0), Vector2::new(0.0, -1.0)),
        ];
        let z = Vector2::new(0.25, 0.5);
        // ξ1 = [2.5, 0], ξ2 = [0, 1]; single = −2·[0.5,0] + 6·([0.5,0] − [0.25,0.5]) = [0.5, −3]
        // ż1 = [0.5, −3] − ([2.5, 0] − [0, 1]) = [−2, −2]
        let zd = networked_zdot(0, &states, &z, &gains(), &g);
        assert_abs_diff_eq!(zd, Vector2::new(-2.0, -2.0), epsilon = 1e-14);
        // Robot 2 has no neighbors: −2·[0, −1] + 6·([0, −1] − [0.25, 0.5]).
        let zd2 = networked_zdot(1, &states, &z, &gains(), &g);
        assert_abs_diff_eq!(zd2, Vector2::new(-1.5, -7.0), epsilon = 1e-14);
    }

    #[test]
    fn delayed_with_current_values_matches_undelayed() {
        let g = DiGraph::from_pairs(3, &[(0, 1), (0, 2), (1, 2), (2, 0)]).unwrap();
        let states = [
            JointState::new(Vector2::new(0.5, 0.1), Vector2::new(0.2, 0.3)),
            JointState::new(Vector2::new(-1.0, 2.0), Vector2::new(1.0, 1.0)),
            JointState::new(Vector2::new(0.0, -0.5), Vector2::new(-0.3, 0.1)),
        ];
        let gs = gains();
        let reader = |_i: usize, j: usize, _t: f64| sliding_xi(&states[j], gs.alpha);
        let z = Vector2::new(0.1, 0.2);
        for i in 0..3 {
            let a = networked_zdot(i, &states, &z, &gs, &g);
            let b = delayed_networked_zdot(i, &states[i], &z, &gs, &g, &reader, 3.0).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn delayed_step_change_seen_after_delay() {
        // ξ_2 switches from 0 to [1, 1] at t = 1; delay 0.5 s.
        let g = DiGraph::from_pairs(2, &[(0, 1)]).unwrap();
        let gs = gains();
        let reader = |_i: usize, _j: usize, t: f64| {
            if t - 0.5 >= 1.0 { Vector2::new(1.0, 1.0) } else { Vector2::zeros() }
        };
        let st = JointState::default();
        let z = Vector2::zeros();
        for (t, expect) in [(1.2, Vector2::zeros()), (1.49, Vector2::zeros()), (1.5, Vector2::new(1.0, 1.0))] {
            let zd = delayed_networked_zdot(0, &st, &z, &gs, &g, &reader, t).unwrap();
            assert_abs_diff_eq!(zd, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn teleop_pair_matches_two_cycle_and_steady_state() {
        let gs = GainSet::new(16.0, 1.0, 0.5, 10.0).with_lambda(2.0);
        let states = [
            JointState::new(Vector2::new(1.0, 0.5), Vector2::zeros()),
            JointState::new(Vector2::new(0.2, -0.5), Vector2::zeros()),
        ];
        let reader = |_i: usize, j: usize, _t: f64| sliding_xi(&states[j], gs.alpha);
        let z = [Vector2::zeros(); 2];
        let [a, b] = teleop_zdot_pair(&states, &z, &gs, &reader, 0.0).unwrap();
        let cyc = DiGraph::from_edges(2, &[(0, 1, 2.0), (1, 0, 2.0)]).unwrap();
        assert_abs_diff_eq!(a, networked_zdot(0, &states, &z[0], &gs, &cyc), epsilon = 1e-15);
        assert_abs_diff_eq!(b, networked_zdot(1, &states, &z[1], &gs, &cyc), epsilon = 1e-15);
        // −λα(q1 − q2)
        assert_abs_diff_eq!(a, -(states[0].q - states[1].q) * (2.0 * 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(a, -b, epsilon = 1e-15);
    }

    #[test]
    fn gains_serde_rejects_unknown_keys() {
        let js = r#"{"k":[[16,0],[0,16]],"gamma":[[8,0,0],[0,8,0],[0,0,8]],"alpha":2,"lambda_m":6}"#;
        let g: GainSet = serde_json::from_str(js).unwrap();
        assert_eq!(g, gains());
        let bad = js.replace("\"alpha\"", "\"alpha\":1,\"beta\"");
        assert!(serde_json::from_str::<GainSet>(&bad).is_err());
    }
}
