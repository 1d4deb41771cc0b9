//! Scenario assembly and closed-loop sampled-data integration.
//!
//! At every control instant `t_k = k·h` the simulator appends each robot's
//! `ξ` to its outgoing delay channel, evaluates every controller on that
//! frozen snapshot, and holds `(τ, ż, ϑ̂̇)` over `[t_k, t_k + h)`. Operator
//! and environment torques are physical and are evaluated continuously
//! inside the plant integration.

use nalgebra::{Matrix2, Vector2, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{
    adaptive_law, damping_control, delayed_networked_zdot, networked_zdot, single_zdot, sliding_xi,
    teleop_zdot_pair, AdaptiveState, ControlOutput, DelayedSignal, GainError, GainSet,
};
use crate::dynamics::{forward_dynamics, ArmModel, DynParams, DynamicsError, JointState};
use crate::network::{
    DelayChannel, DelayModel, DiGraph, GraphSchedule, NetworkError, SwitchingMode,
};
use crate::ode::{euler_step, rk4_step, step_count};
use crate::serde_util;

pub mod presets;

/// Any state entry beyond this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid gains for robot {robot}: {source}")]
    Gains { robot: usize, source: GainError },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("divergence at t = {t:.3} s on robot {robot}: {detail}")]
    Divergence { t: f64, robot: usize, detail: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Damping,
    SingleAdaptive,
    Networked,
    NetworkedDelayed,
    Teleop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    /// RK4 substeps under held controller outputs.
    #[default]
    Rk4,
    /// One explicit Euler step per control period.
    PaperEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsSpec {
    Shared(GainSet),
    PerRobot(Vec<GainSet>),
}

impl GainsSpec {
    pub fn for_robot(&self, i: usize) -> &GainSet {
        match self {
            GainsSpec::Shared(g) => g,
            GainsSpec::PerRobot(v) => &v[i],
        }
    }

    /// Applies `f` to every gain set.
    pub fn map(&mut self, f: impl Fn(&mut GainSet)) {
        match self {
            GainsSpec::Shared(g) => f(g),
            GainsSpec::PerRobot(v) => v.iter_mut().for_each(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Static {
        graph: DiGraph,
    },
    RandomSwitching {
        graphs: Vec<DiGraph>,
        period: f64,
        #[serde(default)]
        mode: SwitchingMode,
    },
    Explicit {
        graphs: Vec<DiGraph>,
        switch_times: Vec<f64>,
        active: Vec<usize>,
    },
}

impl ScheduleSpec {
    pub fn build(&self, horizon: f64, seed: u64) -> Result<GraphSchedule, NetworkError> {
        match self {
            ScheduleSpec::Static { graph } => GraphSchedule::fixed(graph.clone(), horizon),
            ScheduleSpec::RandomSwitching { graphs, period, mode } => {
                GraphSchedule::random_switching(graphs.clone(), *period, horizon, *mode, seed)
            }
            ScheduleSpec::Explicit { graphs, switch_times, active } => {
                GraphSchedule::new(graphs.clone(), switch_times.clone(), active.clone(), horizon)
            }
        }
    }
}

fn is_psd(m: &Matrix2<f64>) -> bool {
    m.iter().all(|v| v.is_finite()) && *m == m.transpose() && m.symmetric_eigenvalues().min() >= 0.0
}

/// Human operator acting at the joint-torque level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorModel {
    #[default]
    None,
    /// `τ_h = −K_d q̇ − K_p (q − q_h)` while `start ≤ t < stop`.
    Pd {
        #[serde(with = "serde_util::mat2")]
        kd: Matrix2<f64>,
        #[serde(with = "serde_util::mat2")]
        kp: Matrix2<f64>,
        #[serde(with = "serde_util::vec2")]
        q_h: Vector2<f64>,
        robot: usize,
        #[serde(default)]
        start: f64,
        #[serde(default)]
        stop: Option<f64>,
    },
}

impl OperatorModel {
    pub fn pd(kd: f64, kp: f64, q_h: Vector2<f64>, robot: usize) -> Self {
        OperatorModel::Pd {
            kd: Matrix2::identity() * kd,
            kp: Matrix2::identity() * kp,
            q_h,
            robot,
            start: 0.0,
            stop: None,
        }
    }

    pub fn attached_robot(&self) -> Option<usize> {
        match self {
            OperatorModel::None => None,
            OperatorModel::Pd { robot, .. } => Some(*robot),
        }
    }

    pub fn target(&self) -> Option<Vector2<f64>> {
        match self {
            OperatorModel::None => None,
            OperatorModel::Pd { q_h, .. } => Some(*q_h),
        }
    }
}

/// Operator torque on its attached robot; zero when inactive.
pub fn operator_torque(model: &OperatorModel, state: &JointState, t: f64) -> Vector2<f64> {
    match model {
        OperatorModel::None => Vector2::zeros(),
        OperatorModel::Pd { kd, kp, q_h, start, stop, .. } => {
            let active = t >= *start && stop.is_none_or(|s| t < s);
            if active {
                -kd * state.qdot - kp * (state.q - q_h)
            } else {
                Vector2::zeros()
            }
        }
    }
}

/// Environment contacted by one robot. The robot exerts `τ* = K_e (q − q_e)`
/// on it and feels `−τ*`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentModel {
    #[default]
    None,
    Spring {
        #[serde(with = "serde_util::mat2")]
        ke: Matrix2<f64>,
        #[serde(with = "serde_util::vec2")]
        q_e: Vector2<f64>,
        robot: usize,
    },
}

impl EnvironmentModel {
    pub fn attached_robot(&self) -> Option<usize> {
        match self {
            EnvironmentModel::None => None,
            EnvironmentModel::Spring { robot, .. } => Some(*robot),
        }
    }

    /// Torque the robot exerts on the environment.
    pub fn exerted_torque(&self, state: &JointState) -> Vector2<f64> {
        match self {
            EnvironmentModel::None => Vector2::zeros(),
            EnvironmentModel::Spring { ke, q_e, .. } => ke * (state.q - q_e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    #[serde(with = "serde_util::vec2")]
    pub q: Vector2<f64>,
    #[serde(with = "serde_util::vec2", default = "Vector2::zeros")]
    pub qdot: Vector2<f64>,
    #[serde(with = "serde_util::vec2", default = "Vector2::zeros")]
    pub z: Vector2<f64>,
    #[serde(with = "serde_util::vec3", default = "Vector3::zeros")]
    pub theta_hat: Vector3<f64>,
}

impl InitialCondition {
    pub fn at_rest(q: Vector2<f64>) -> Self {
        Self { q, ..Default::default() }
    }
}

fn default_control_period() -> f64 {
    0.005
}

fn default_substep() -> f64 {
    0.001
}

/// Complete declarative experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub robots: Vec<ArmModel>,
    pub controller: ControllerKind,
    pub gains: GainsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_model: Option<DelayModel>,
    #[serde(default)]
    pub operator: OperatorModel,
    #[serde(default)]
    pub environment: EnvironmentModel,
    pub initial_conditions: Vec<InitialCondition>,
    #[serde(default = "default_control_period")]
    pub control_period: f64,
    #[serde(default)]
    pub integrator: IntegratorMode,
    #[serde(default = "default_substep")]
    pub rk4_substep: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.robots.len()
    }

    /// Sets the scenario seed and the delay-model seed together.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(d) = self.delay_model.as_mut() {
            d.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.n();
        if n == 0 {
            return invalid("at least one robot is required");
        }
        if self.initial_conditions.len() != n {
            return invalid(format!("{} initial conditions for {} robots", self.initial_conditions.len(), n));
        }
        for (i, ic) in self.initial_conditions.iter().enumerate() {
            let finite = ic.q.iter().chain(&ic.qdot).chain(&ic.z).chain(&ic.theta_hat).all(|v| v.is_finite());
            if !finite {
                return invalid(format!("initial condition {i} is not finite"));
            }
        }
        if let GainsSpec::PerRobot(v) = &self.gains {
            if v.len() != n {
                return invalid(format!("{} gain sets for {} robots", v.len(), n));
            }
        }
        for i in 0..n {
            let g = self.gains.for_robot(i);
            g.validate().map_err(|source| ScenarioError::Gains { robot: i, source })?;
            let needs_alpha = matches!(
                self.controller,
                ControllerKind::Damping | ControllerKind::Networked | ControllerKind::NetworkedDelayed | ControllerKind::Teleop
            );
            if needs_alpha && g.alpha <= 0.0 {
                return invalid("α must be positive for this controller");
            }
        }
        if !(self.control_period > 0.0 && self.control_period.is_finite()) {
            return invalid("control_period must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid("horizon must be positive");
        }
        if self.integrator == IntegratorMode::Rk4 {
            let ratio = self.control_period / self.rk4_substep;
            if !(self.rk4_substep > 0.0) || (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return invalid("rk4_substep must divide control_period");
            }
        }
        match self.controller {
            ControllerKind::Networked | ControllerKind::NetworkedDelayed => {
                let Some(spec) = &self.schedule else {
                    return invalid("networked controllers need a schedule");
                };
                let sched = spec.build(self.horizon + self.control_period, self.seed)?;
                if sched.n() != n {
                    return invalid(format!("schedule has {} vertices for {} robots", sched.n(), n));
                }
            }
            _ if self.schedule.is_some() => return invalid("schedule given for a non-networked controller"),
            _ => {}
        }
        match (self.controller, &self.delay_model) {
            (ControllerKind::NetworkedDelayed, None) => return invalid("networked_delayed needs a delay_model"),
            (ControllerKind::NetworkedDelayed | ControllerKind::Teleop, Some(d)) => d.validate()?,
            (_, Some(_)) => return invalid("delay_model given for an undelayed controller"),
            _ => {}
        }
        if self.controller == ControllerKind::Teleop && n != 2 {
            return invalid("teleop needs exactly two robots");
        }
        if let OperatorModel::Pd { kd, kp, q_h, robot, start, stop } = &self.operator {
            if *robot >= n {
                return invalid(format!("operator attached to missing robot {robot}"));
            }
            if !is_psd(kd) || !is_psd(kp) {
                return invalid("operator gains must be positive semidefinite");
            }
            if !q_h.iter().all(|v| v.is_finite()) || !start.is_finite() || stop.is_some_and(|s| !(s > *start)) {
                return invalid("operator target/activity window invalid");
            }
        }
        if let EnvironmentModel::Spring { ke, q_e, robot } = &self.environment {
            if *robot >= n {
                return invalid(format!("environment attached to missing robot {robot}"));
            }
            if !is_psd(ke) || !q_e.iter().all(|v| v.is_finite()) {
                return invalid("environment stiffness must be positive semidefinite");
            }
        }
        Ok(())
    }
}

/// Time series of one robot, one entry per control instant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RobotTrace {
    pub q: Vec<Vector2<f64>>,
    pub qdot: Vec<Vector2<f64>>,
    pub z: Vec<Vector2<f64>>,
    pub zdot: Vec<Vector2<f64>>,
    pub s: Vec<Vector2<f64>>,
    pub theta_hat: Vec<Vector3<f64>>,
    pub tau: Vec<Vector2<f64>>,
    /// Total external torque applied to the plant (operator, probe input,
    /// minus the torque exerted on an environment).
    pub tau_ext: Vec<Vector2<f64>>,
}

impl RobotTrace {
    pub fn state(&self, k: usize) -> JointState {
        JointState::new(self.q[k], self.qdot[k])
    }

    pub fn ctrl(&self, k: usize) -> AdaptiveState {
        AdaptiveState { z: self.z[k], theta_hat: self.theta_hat[k] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub robots: Vec<RobotTrace>,
    pub gains: Vec<GainSet>,
    pub params: Vec<DynParams>,
    pub control_period: f64,
    pub warnings: Vec<String>,
}

fn inf_norm(v: &Vector2<f64>) -> f64 {
    v.amax()
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    /// Sample index closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.control_period).round().max(0.0) as usize).min(self.last())
    }

    pub fn xi(&self, i: usize, k: usize) -> Vector2<f64> {
        sliding_xi(&self.robots[i].state(k), self.gains[i].alpha)
    }

    pub fn xi_centroid(&self, k: usize) -> Vector2<f64> {
        (0..self.robots.len()).map(|i| self.xi(i, k)).sum::<Vector2<f64>>() / self.robots.len() as f64
    }

    pub fn q_centroid(&self, k: usize) -> Vector2<f64> {
        self.robots.iter().map(|r| r.q[k]).sum::<Vector2<f64>>() / self.robots.len() as f64
    }

    pub fn qdot_centroid(&self, k: usize) -> Vector2<f64> {
        self.robots.iter().map(|r| r.qdot[k]).sum::<Vector2<f64>>() / self.robots.len() as f64
    }

    /// `max_{i<j} ‖q_i − q_j‖∞` at sample `k`.
    pub fn consensus_error_at(&self, k: usize) -> f64 {
        let n = self.robots.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max(inf_norm(&(self.robots[i].q[k] - self.robots[j].q[k])));
            }
        }
        worst
    }

    /// `max_i ‖q̇_i‖∞` at sample `k`.
    pub fn velocity_error_at(&self, k: usize) -> f64 {
        self.robots.iter().map(|r| inf_norm(&r.qdot[k])).fold(0.0, f64::max)
    }

    /// `max_i ‖q_i − target‖∞` at sample `k`.
    pub fn target_error_at(&self, k: usize, target: &Vector2<f64>) -> f64 {
        self.robots.iter().map(|r| inf_norm(&(r.q[k] - target))).fold(0.0, f64::max)
    }

    /// Earliest time after which `error(k) ≤ band` for the rest of the run.
    pub fn settling_time(&self, band: f64, error: impl Fn(usize) -> f64) -> Option<f64> {
        let mut last_out = None;
        for k in 0..self.len() {
            if error(k) > band {
                last_out = Some(k);
            }
        }
        match last_out {
            None => Some(self.times[0]),
            Some(k) if k == self.last() => None,
            Some(k) => Some(self.times[k + 1]),
        }
    }

    /// Lyapunov function of robot `i` at every sample.
    pub fn lyapunov_series(&self, i: usize) -> Vec<f64> {
        let r = &self.robots[i];
        (0..self.len())
            .map(|k| crate::controllers::lyapunov(&r.state(k), &r.ctrl(k), &self.gains[i], &self.params[i]))
            .collect()
    }

    pub fn s_l2_norm(&self, i: usize) -> f64 {
        let mags: Vec<f64> = self.robots[i].s.iter().map(|v| v.norm()).collect();
        l2_norm(&mags, self.control_period)
    }
}

/// Shorthand for [`Trace::consensus_error_at`] at time `t`.
pub fn consensus_error(trace: &Trace, t: f64) -> f64 {
    trace.consensus_error_at(trace.index_at(t))
}

/// Trapezoid-rule `√∫ x²` of uniformly sampled magnitudes.
pub fn l2_norm(samples: &[f64], dt: f64) -> f64 {
    running_l2(samples, dt).last().copied().unwrap_or(0.0)
}

/// `√∫₀^{t_k} x²` at every sample.
pub fn running_l2(samples: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(samples.len());
    for (k, x) in samples.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * dt * (samples[k - 1].powi(2) + x.powi(2));
        }
        out.push(acc.sqrt());
    }
    out
}

/// Additional torque injected on one robot (used by manipulability probes).
pub struct InjectedInput<'a> {
    pub robot: usize,
    pub torque: &'a (dyn Fn(f64) -> Vector2<f64> + Sync),
}

struct ChannelReader<'a> {
    channels: &'a [DelayChannel],
    model: Option<&'a DelayModel>,
}

impl DelayedSignal for ChannelReader<'_> {
    fn delayed_xi(&self, receiver: usize, sender: usize, t: f64) -> Result<Vector2<f64>, NetworkError> {
        let delay = self.model.map_or(0.0, |m| m.sample_delay((receiver, sender), t));
        self.channels[sender].delayed_read(t, delay)
    }
}

pub fn run_scenario(sc: &Scenario) -> Result<Trace, SimError> {
    run_scenario_with_input(sc, None)
}

/// Runs independent scenarios in parallel.
pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<Trace, SimError>> {
    scenarios.par_iter().map(run_scenario).collect()
}

fn diverged(state: &JointState, ctrl: &AdaptiveState) -> Option<String> {
    let entries = state.q.iter().chain(&state.qdot).chain(&ctrl.z).chain(&ctrl.theta_hat);
    for v in entries {
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Some(format!("state entry {v:e} beyond {DIVERGENCE_LIMIT:e}"));
        }
    }
    None
}

pub fn run_scenario_with_input(sc: &Scenario, input: Option<InjectedInput<'_>>) -> Result<Trace, SimError> {
    sc.validate()?;
    let n = sc.n();
    let h = sc.control_period;
    let steps = step_count(sc.horizon, h);
    let gains: Vec<GainSet> = (0..n).map(|i| *sc.gains.for_robot(i)).collect();
    let params: Vec<DynParams> = sc.robots.iter().map(|r| r.params).collect();

    let schedule = match &sc.schedule {
        Some(spec) => Some(spec.build(sc.horizon + h, sc.seed)?),
        None => None,
    };
    let mut warnings = Vec::new();
    if let Some(sched) = &schedule {
        if sched.longest_connecting_interval().is_none() {
            warnings.push("schedule: the tail of the run has no jointly connected interval".to_string());
        }
    }
    let uses_channels = matches!(sc.controller, ControllerKind::NetworkedDelayed | ControllerKind::Teleop);
    let mut channels: Vec<DelayChannel> = if uses_channels {
        let lookback = sc.delay_model.as_ref().map_or(1.0, |m| m.max_delay() + m.resample_period + 1.0);
        (0..n).map(|_| DelayChannel::new(lookback)).collect()
    } else {
        Vec::new()
    };

    let mut states: Vec<JointState> =
        sc.initial_conditions.iter().map(|ic| JointState::new(ic.q, ic.qdot)).collect();
    let mut ctrls: Vec<AdaptiveState> = sc
        .initial_conditions
        .iter()
        .map(|ic| AdaptiveState { z: ic.z, theta_hat: ic.theta_hat })
        .collect();

    let external = |i: usize, t: f64, st: &JointState| -> Vector2<f64> {
        let mut ext = Vector2::zeros();
        if sc.operator.attached_robot() == Some(i) {
            ext += operator_torque(&sc.operator, st, t);
        }
        if sc.environment.attached_robot() == Some(i) {
            ext -= sc.environment.exerted_torque(st);
        }
        if let Some(inj) = &input {
            if inj.robot == i {
                ext += (inj.torque)(t);
            }
        }
        ext
    };

    let mut robots = vec![RobotTrace::default(); n];
    for r in robots.iter_mut() {
        let cap = steps + 1;
        *r = RobotTrace {
            q: Vec::with_capacity(cap),
            qdot: Vec::with_capacity(cap),
            z: Vec::with_capacity(cap),
            zdot: Vec::with_capacity(cap),
            s: Vec::with_capacity(cap),
            theta_hat: Vec::with_capacity(cap),
            tau: Vec::with_capacity(cap),
            tau_ext: Vec::with_capacity(cap),
        };
    }
    let mut times = Vec::with_capacity(steps + 1);
    let substeps = match sc.integrator {
        IntegratorMode::Rk4 => (h / sc.rk4_substep).round() as usize,
        IntegratorMode::PaperEuler => 1,
    };
    let dt = h / substeps as f64;
    let mut outs = vec![ControlOutput::default(); n];

    for k in 0..=steps {
        let t = k as f64 * h;
        for i in 0..n {
            if let Some(detail) = diverged(&states[i], &ctrls[i]) {
                return Err(SimError::Divergence { t, robot: i, detail });
            }
        }
        for (i, ch) in channels.iter_mut().enumerate() {
            ch.push(t, sliding_xi(&states[i], gains[i].alpha))?;
        }

        match sc.controller {
            ControllerKind::Damping => {
                for i in 0..n {
                    outs[i] = ControlOutput {
                        tau: damping_control(&states[i], gains[i].alpha),
                        s: states[i].qdot - ctrls[i].z,
                        ..Default::default()
                    };
                }
            }
            ControllerKind::SingleAdaptive => {
                for i in 0..n {
                    let zd = single_zdot(&states[i], &ctrls[i].z, &gains[i]);
                    outs[i] = adaptive_law(&states[i], &ctrls[i], zd, &gains[i]);
                }
            }
            ControllerKind::Networked => {
                let graph = schedule.as_ref().expect("validated").active_at(t);
                for i in 0..n {
                    let zd = networked_zdot(i, &states, &ctrls[i].z, &gains[i], graph);
                    outs[i] = adaptive_law(&states[i], &ctrls[i], zd, &gains[i]);
                }
            }
            ControllerKind::NetworkedDelayed => {
                let graph = schedule.as_ref().expect("validated").active_at(t);
                let reader = ChannelReader { channels: &channels, model: sc.delay_model.as_ref() };
                for i in 0..n {
                    let zd = delayed_networked_zdot(i, &states[i], &ctrls[i].z, &gains[i], graph, &reader, t)?;
                    outs[i] = adaptive_law(&states[i], &ctrls[i], zd, &gains[i]);
                }
            }
            ControllerKind::Teleop => {
                let reader = ChannelReader { channels: &channels, model: sc.delay_model.as_ref() };
                let pair_states = [states[0], states[1]];
                let pair_z = [ctrls[0].z, ctrls[1].z];
                let zd = if gains[0] == gains[1] {
                    teleop_zdot_pair(&pair_states, &pair_z, &gains[0], &reader, t)?
                } else {
                    // Per-robot gains: each side uses its own λ.
                    let mut out = [Vector2::zeros(); 2];
                    for i in 0..2 {
                        let g = DiGraph::from_edges(2, &[(i, 1 - i, gains[i].lambda)]).map_err(SimError::Network)?;
                        out[i] = delayed_networked_zdot(i, &states[i], &ctrls[i].z, &gains[i], &g, &reader, t)?;
                    }
                    out
                };
                for i in 0..2 {
                    outs[i] = adaptive_law(&states[i], &ctrls[i], zd[i], &gains[i]);
                }
            }
        }

        times.push(t);
        for i in 0..n {
            let r = &mut robots[i];
            r.q.push(states[i].q);
            r.qdot.push(states[i].qdot);
            r.z.push(ctrls[i].z);
            r.zdot.push(outs[i].zdot);
            r.s.push(outs[i].s);
            r.theta_hat.push(ctrls[i].theta_hat);
            r.tau.push(outs[i].tau);
            r.tau_ext.push(external(i, t, &states[i]));
        }
        if k == steps {
            break;
        }

        for i in 0..n {
            let tau = outs[i].tau;
            let p = params[i];
            let mut failure: Option<DynamicsError> = None;
            let mut f = |tt: f64, x: &Vector4<f64>| -> Vector4<f64> {
                let st = JointState::new(Vector2::new(x[0], x[1]), Vector2::new(x[2], x[3]));
                match forward_dynamics(&st, &(tau + external(i, tt, &st)), &p) {
                    Ok(qdd) => Vector4::new(x[2], x[3], qdd[0], qdd[1]),
                    Err(e) => {
                        failure.get_or_insert(e);
                        Vector4::zeros()
                    }
                }
            };
            let mut x = Vector4::new(states[i].q[0], states[i].q[1], states[i].qdot[0], states[i].qdot[1]);
            for m in 0..substeps {
                let tt = t + m as f64 * dt;
                x = match sc.integrator {
                    IntegratorMode::Rk4 => rk4_step(&mut f, tt, &x, dt),
                    IntegratorMode::PaperEuler => euler_step(&mut f, tt, &x, dt),
                };
            }
            if !x.iter().all(|v| v.is_finite()) || matches!(failure, Some(DynamicsError::DegenerateInertia { det, .. }) if det.is_nan()) {
                return Err(SimError::Divergence { t, robot: i, detail: "non-finite plant state".into() });
            }
            if let Some(e) = failure {
                return Err(e.into());
            }
            states[i] = JointState::new(Vector2::new(x[0], x[1]), Vector2::new(x[2], x[3]));
            ctrls[i].z += outs[i].zdot * h;
            ctrls[i].theta_hat += outs[i].theta_hat_dot * h;
        }
    }

    Ok(Trace { times, robots, gains, params, control_period: h, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionVerdict {
    Holds,
    Violated,
    /// Steady state was not reached inside the window.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueReflectionReport {
    pub verdict: ReflectionVerdict,
    /// Largest `‖q̇_i‖∞`, `‖ż_i‖∞` in the window.
    pub max_motion: f64,
    /// `max ‖τ*₁ − (λαK/λ_M)(q₁ − q₂)‖∞`.
    pub master_error: f64,
    /// `max ‖τ*₂ + (λαK/λ_M)(q₂ − q₁)‖∞`.
    pub slave_error: f64,
    /// `max ‖τ*₁ − τ*₂‖∞`.
    pub reflection_gap: f64,
    /// `max ‖τ*₁‖∞`.
    pub operator_scale: f64,
}

/// Steady-state threshold on `‖q̇_i‖∞` and `‖ż_i‖∞`.
pub const STEADY_MOTION: f64 = 1e-3;

/// Checks static torque reflection over the trailing `window` seconds of a
/// teleoperation trace with `master` as the operator side. Relative errors
/// are measured against the operator torque magnitude; a window with no
/// interaction torque at all is judged on absolute error.
pub fn torque_reflection_check(trace: &Trace, master: usize, window: f64, tolerance: f64) -> TorqueReflectionReport {
    let slave = 1 - master;
    let g = &trace.gains[master];
    let start = trace.index_at(trace.times[trace.last()] - window);
    let mut rep = TorqueReflectionReport {
        verdict: ReflectionVerdict::Inconclusive,
        max_motion: 0.0,
        master_error: 0.0,
        slave_error: 0.0,
        reflection_gap: 0.0,
        operator_scale: 0.0,
    };
    if g.lambda_m <= 0.0 {
        return rep;
    }
    let stiffness = g.k * (g.lambda * g.alpha / g.lambda_m);
    for k in start..trace.len() {
        let (m, s) = (&trace.robots[master], &trace.robots[slave]);
        for r in [m, s] {
            rep.max_motion = rep.max_motion.max(inf_norm(&r.qdot[k])).max(inf_norm(&r.zdot[k]));
        }
        let tau1 = m.tau_ext[k];
        let tau2 = -s.tau_ext[k];
        rep.master_error = rep.master_error.max(inf_norm(&(tau1 - stiffness * (m.q[k] - s.q[k]))));
        rep.slave_error = rep.slave_error.max(inf_norm(&(tau2 + stiffness * (s.q[k] - m.q[k]))));
        rep.reflection_gap = rep.reflection_gap.max(inf_norm(&(tau1 - tau2)));
        rep.operator_scale = rep.operator_scale.max(inf_norm(&tau1));
    }
    if rep.max_motion >= STEADY_MOTION {
        return rep;
    }
    let scale = if rep.operator_scale > 1e-9 { rep.operator_scale } else { 1.0 };
    let worst = rep.master_error.max(rep.slave_error).max(rep.reflection_gap) / scale;
    rep.verdict = if worst < tolerance { ReflectionVerdict::Holds } else { ReflectionVerdict::Violated };
    rep
}
