//! Empirical manipulability: the damped point-mass benchmark, L2 gain
//! curves over growing horizons, and finite/infinite classification.

use nalgebra::{Vector2, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::GainSet;
use crate::ode::{rk4_step, step_count};
use crate::sim::{self, l2_norm, InjectedInput, OperatorModel, Scenario, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManipError {
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error("probe input is not square-integrable on the horizons (tail energy {tail:.3e} vs {head:.3e})")]
    NotSquareIntegrable { head: f64, tail: f64 },
    #[error("invalid point mass: {0}")]
    InvalidPointMass(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Damping {
    Constant { b: f64 },
    /// `b(t) = b0 + amplitude · sin(ω t)`.
    Sinusoidal { b0: f64, amplitude: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMass {
    pub m: f64,
    pub damping: Damping,
}

impl PointMass {
    pub fn new(m: f64, b: f64) -> Self {
        Self { m, damping: Damping::Constant { b } }
    }

    pub fn b(&self, t: f64) -> f64 {
        match self.damping {
            Damping::Constant { b } => b,
            Damping::Sinusoidal { b0, amplitude, omega } => b0 + amplitude * (omega * t).sin(),
        }
    }

    pub fn b_min(&self) -> f64 {
        match self.damping {
            Damping::Constant { b } => b,
            Damping::Sinusoidal { b0, amplitude, .. } => b0 - amplitude.abs(),
        }
    }

    pub fn validate(&self) -> Result<(), ManipError> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(ManipError::InvalidPointMass(format!("mass must be positive, got {}", self.m)));
        }
        if !(self.b_min() > 0.0 && self.b_min().is_finite()) {
            return Err(ManipError::InvalidPointMass("damping must stay positive".into()));
        }
        Ok(())
    }
}

/// Point-mass trajectory with the running integrals needed for the first
/// integral `m ẋ + ∫ b ẋ = ∫ f`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub f: Vec<f64>,
    pub int_f: Vec<f64>,
    pub int_b_xdot: Vec<f64>,
}

impl PointMassTrajectory {
    /// `m(ẋ − ẋ(0)) + ∫ b ẋ − ∫ f` at every sample.
    pub fn first_integral_residual(&self, pm: &PointMass) -> Vec<f64> {
        (0..self.times.len())
            .map(|k| pm.m * (self.xdot[k] - self.xdot[0]) + self.int_b_xdot[k] - self.int_f[k])
            .collect()
    }
}

pub fn point_mass_response(
    pm: &PointMass,
    f: &dyn Fn(f64) -> f64,
    horizon: f64,
    step: f64,
) -> Result<PointMassTrajectory, ManipError> {
    point_mass_response_from(pm, 0.0, 0.0, f, horizon, step)
}

/// RK4 on `[x, ẋ, ∫f, ∫bẋ]`.
pub fn point_mass_response_from(
    pm: &PointMass,
    x0: f64,
    v0: f64,
    f: &dyn Fn(f64) -> f64,
    horizon: f64,
    step: f64,
) -> Result<PointMassTrajectory, ManipError> {
    pm.validate()?;
    if !(horizon > 0.0 && step > 0.0) {
        return Err(ManipError::InvalidProbe("horizon and step must be positive".into()));
    }
    let steps = step_count(horizon, step);
    let mut traj = PointMassTrajectory {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        xdot: Vec::with_capacity(steps + 1),
        f: Vec::with_capacity(steps + 1),
        int_f: Vec::with_capacity(steps + 1),
        int_b_xdot: Vec::with_capacity(steps + 1),
    };
    let mut rhs = |t: f64, s: &Vector4<f64>| {
        let b = pm.b(t);
        let force = f(t);
        Vector4::new(s[1], (force - b * s[1]) / pm.m, force, b * s[1])
    };
    let mut s = Vector4::new(x0, v0, 0.0, 0.0);
    for k in 0..=steps {
        let t = k as f64 * step;
        traj.times.push(t);
        traj.x.push(s[0]);
        traj.xdot.push(s[1]);
        traj.f.push(f(t));
        traj.int_f.push(s[2]);
        traj.int_b_xdot.push(s[3]);
        if k < steps {
            s = rk4_step(&mut rhs, t, &s, step);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSup {
    pub sup: f64,
    /// Frequency attaining the sup (0 for the low-frequency limit).
    pub argsup: f64,
    pub infinite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HinfReport {
    pub position: GainSup,
    pub velocity: GainSup,
}

/// `|G(jω)| = 1 / (|ω| √(m²ω² + b²))`.
pub fn position_gain(pm: &PointMass, b: f64, omega: f64) -> f64 {
    1.0 / (omega.abs() * (pm.m * pm.m * omega * omega + b * b).sqrt())
}

/// `|jω G(jω)| = 1 / √(m²ω² + b²)`.
pub fn velocity_gain(pm: &PointMass, b: f64, omega: f64) -> f64 {
    1.0 / (pm.m * pm.m * omega * omega + b * b).sqrt()
}

/// Logarithmic frequency grid.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Slope of `log|G|` vs `log ω` between two frequencies.
fn log_slope(g: impl Fn(f64) -> f64, w0: f64, w1: f64) -> f64 {
    (g(w1).ln() - g(w0).ln()) / (w1.ln() - w0.ln())
}

/// Evaluates both point-mass gains on `grid`. A gain is flagged infinite
/// when its low-frequency log-log slope is that of an integrator
/// (≤ −1/2) or the grid contains ω = 0 with an unbounded value.
pub fn hinf_point_mass(pm: &PointMass, grid: &[f64]) -> Result<HinfReport, ManipError> {
    pm.validate()?;
    let Damping::Constant { b } = pm.damping else {
        return Err(ManipError::InvalidPointMass("frequency response needs constant damping".into()));
    };
    let mut w: Vec<f64> = grid.iter().copied().filter(|v| v.is_finite() && *v >= 0.0).collect();
    w.sort_by(f64::total_cmp);
    w.dedup();
    let positive: Vec<f64> = w.iter().copied().filter(|v| *v > 0.0).collect();
    if positive.len() < 2 {
        return Err(ManipError::InvalidProbe("need at least two positive frequencies".into()));
    }
    let summarize = |g: &dyn Fn(f64) -> f64| -> GainSup {
        let low_slope = log_slope(g, positive[0], positive[1]);
        let mut sup = GainSup { sup: 0.0, argsup: positive[0], infinite: low_slope <= -0.5 };
        // The ω → 0 limit counts as a grid point.
        for &omega in std::iter::once(&0.0).chain(&w) {
            let v = g(omega);
            if v.is_infinite() {
                sup.infinite = true;
            }
            if v > sup.sup {
                sup.sup = v;
                sup.argsup = omega;
            }
        }
        sup
    };
    Ok(HinfReport {
        position: summarize(&|o| position_gain(pm, b, o)),
        velocity: summarize(&|o| velocity_gain(pm, b, o)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeInput {
    /// `amplitude / (t + 1)` on one joint.
    Harmonic { amplitude: f64, joint: usize },
    /// `amplitude` on one joint for `t < duration`.
    Pulse { amplitude: f64, joint: usize, duration: f64 },
    /// Constant torque (not square-integrable; rejected by gain probes).
    Constant { amplitude: f64, joint: usize },
}

impl Default for ProbeInput {
    fn default() -> Self {
        ProbeInput::Harmonic { amplitude: 5.0, joint: 0 }
    }
}

impl ProbeInput {
    pub fn scalar(&self, t: f64) -> f64 {
        match *self {
            ProbeInput::Harmonic { amplitude, .. } => amplitude / (t + 1.0),
            ProbeInput::Pulse { amplitude, duration, .. } => {
                if t < duration {
                    amplitude
                } else {
                    0.0
                }
            }
            ProbeInput::Constant { amplitude, .. } => amplitude,
        }
    }

    pub fn joint(&self) -> usize {
        match *self {
            ProbeInput::Harmonic { joint, .. }
            | ProbeInput::Pulse { joint, .. }
            | ProbeInput::Constant { joint, .. } => joint,
        }
    }

    pub fn torque(&self, t: f64) -> Vector2<f64> {
        let mut v = Vector2::zeros();
        v[self.joint()] = self.scalar(t);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputSelector {
    /// `q_i − ψ0` with `ψ0 = q(0) + (q̇(0) − s(0))/α`.
    PositionIncrement { robot: usize },
    /// `q̇_i − (q̇(0) − s(0))`.
    Velocity { robot: usize },
    /// `ξ_c − ξ_c(0)`.
    XiCentroid,
    /// `q_c − [q_c(0) + q̇_c(0)/α]`.
    QCentroid,
}

pub fn default_horizons() -> Vec<f64> {
    vec![10.0, 30.0, 100.0, 300.0, 1000.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainProbe {
    #[serde(default)]
    pub input: ProbeInput,
    /// Robot receiving the probe torque.
    #[serde(default)]
    pub robot: usize,
    pub output: OutputSelector,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
}

impl GainProbe {
    pub fn position(robot: usize) -> Self {
        Self { input: ProbeInput::default(), robot, output: OutputSelector::PositionIncrement { robot }, horizons: default_horizons() }
    }

    pub fn velocity(robot: usize) -> Self {
        Self { output: OutputSelector::Velocity { robot }, ..Self::position(robot) }
    }

    pub fn validate(&self) -> Result<(), ManipError> {
        validate_horizons(&self.horizons)?;
        if self.input.joint() > 1 {
            return Err(ManipError::InvalidProbe("probe joint must be 0 or 1".into()));
        }
        Ok(())
    }
}

fn validate_horizons(h: &[f64]) -> Result<(), ManipError> {
    if h.len() < 2 {
        return Err(ManipError::InvalidProbe("at least two horizons are required".into()));
    }
    if !(h[0] > 0.0) || h.windows(2).any(|w| !(w[1] > w[0])) || !h.iter().all(|v| v.is_finite()) {
        return Err(ManipError::InvalidProbe("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthClass {
    Finite,
    InfiniteDeg1,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub horizon: f64,
    pub output_norm: f64,
    pub input_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    pub points: Vec<GainPoint>,
    pub class: GrowthClass,
    /// `R(T_last) / R(T_mid)`.
    pub plateau_ratio: f64,
    /// `R(T_last) / R(T_first)`.
    pub growth_ratio: f64,
    /// Slope `b` of the least-squares fit `R ≈ a + b √(ln T)`.
    pub fit_slope: f64,
}

/// Plateau ratio below which the gain is classified finite.
pub const PLATEAU_RATIO: f64 = 1.2;

impl GainCurve {
    pub fn ratio_at(&self, horizon: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.horizon - horizon).abs() < 1e-9).map(|p| p.ratio)
    }

    fn classify(points: Vec<GainPoint>) -> Self {
        let r: Vec<f64> = points.iter().map(|p| p.ratio).collect();
        let last = *r.last().expect("validated horizons");
        let plateau_ratio = last / r[r.len() / 2];
        let growth_ratio = last / r[0];
        let xs: Vec<f64> = points.iter().map(|p| p.horizon.ln().max(0.0).sqrt()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = r.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&r).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let fit_slope = sxy / sxx;
        let monotone = r.windows(2).all(|w| w[1] >= w[0]);
        let class = if plateau_ratio < PLATEAU_RATIO {
            GrowthClass::Finite
        } else if monotone && fit_slope > 0.0 {
            GrowthClass::InfiniteDeg1
        } else {
            GrowthClass::Inconclusive
        };
        GainCurve { points, class, plateau_ratio, growth_ratio, fit_slope }
    }
}

/// Builds a gain curve from uniformly sampled output and input magnitudes.
pub fn gain_curve_from_series(
    dt: f64,
    output_mags: &[f64],
    input_mags: &[f64],
    horizons: &[f64],
) -> Result<GainCurve, ManipError> {
    validate_horizons(horizons)?;
    let index = |t: f64| ((t / dt).round() as usize).min(output_mags.len() - 1);
    let mid = index(horizons[horizons.len() / 2]);
    let end = index(*horizons.last().expect("validated"));
    let head = l2_norm(&input_mags[..=mid], dt).powi(2);
    let tail = l2_norm(&input_mags[mid..=end], dt).powi(2);
    if !(head > 0.0) {
        return Err(ManipError::InvalidProbe("probe input is identically zero".into()));
    }
    if tail > head {
        return Err(ManipError::NotSquareIntegrable { head, tail });
    }
    let points = horizons
        .iter()
        .map(|&h| {
            let k = index(h);
            let output_norm = l2_norm(&output_mags[..=k], dt);
            let input_norm = l2_norm(&input_mags[..=k], dt);
            GainPoint { horizon: h, output_norm, input_norm, ratio: output_norm / input_norm }
        })
        .collect();
    Ok(GainCurve::classify(points))
}

/// Runs `sc` once to the longest horizon with the operator replaced by the
/// probe torque and evaluates `R(T)` at every horizon.
pub fn estimate_gain_curve(sc: &Scenario, probe: &GainProbe) -> Result<GainCurve, ManipError> {
    probe.validate()?;
    if probe.robot >= sc.n() {
        return Err(ManipError::InvalidProbe(format!("robot {} out of range", probe.robot)));
    }
    let mut run = sc.clone();
    run.operator = OperatorModel::None;
    run.horizon = *probe.horizons.last().expect("validated");
    let input = probe.input;
    let torque = move |t: f64| input.torque(t);
    let trace = sim::run_scenario_with_input(&run, Some(InjectedInput { robot: probe.robot, torque: &torque }))?;

    let alpha = trace.gains[0].alpha;
    let needs_alpha = matches!(probe.output, OutputSelector::PositionIncrement { .. } | OutputSelector::QCentroid);
    if needs_alpha && alpha <= 0.0 {
        return Err(ManipError::InvalidProbe("position outputs need α > 0".into()));
    }
    let output_mags: Vec<f64> = match probe.output {
        OutputSelector::PositionIncrement { robot } | OutputSelector::Velocity { robot } => {
            if robot >= sc.n() {
                return Err(ManipError::InvalidProbe(format!("output robot {robot} out of range")));
            }
            let r = &trace.robots[robot];
            let offset = r.qdot[0] - r.s[0];
            let position = matches!(probe.output, OutputSelector::PositionIncrement { .. });
            let a = trace.gains[robot].alpha;
            (0..trace.len())
                .map(|k| if position { r.q[k] - (r.q[0] + offset / a) } else { r.qdot[k] - offset }.norm())
                .collect()
        }
        OutputSelector::XiCentroid => {
            let base = trace.xi_centroid(0);
            (0..trace.len()).map(|k| (trace.xi_centroid(k) - base).norm()).collect()
        }
        OutputSelector::QCentroid => {
            let base = trace.q_centroid(0) + trace.qdot_centroid(0) / alpha;
            (0..trace.len()).map(|k| (trace.q_centroid(k) - base).norm()).collect()
        }
    };
    let input_mags: Vec<f64> = trace.times.iter().map(|&t| input.scalar(t).abs()).collect();
    gain_curve_from_series(trace.control_period, &output_mags, &input_mags, &probe.horizons)
}

/// Gain curves for several probes in parallel.
pub fn estimate_gain_curves(sc: &Scenario, probes: &[GainProbe]) -> Vec<Result<GainCurve, ManipError>> {
    probes.par_iter().map(|p| estimate_gain_curve(sc, p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMassOutput {
    Position,
    Velocity,
}

/// Point-mass benchmark run, as stored in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMassScenario {
    #[serde(default)]
    pub name: String,
    pub point_mass: PointMass,
    pub input: ProbeInput,
    pub horizon: f64,
    pub step: f64,
}

pub fn pointmass_preset() -> PointMassScenario {
    PointMassScenario {
        name: "pointmass".into(),
        point_mass: PointMass::new(1.0, 1.0),
        input: ProbeInput::Harmonic { amplitude: 1.0, joint: 0 },
        horizon: 100.0,
        step: 0.01,
    }
}

pub fn point_mass_gain_curve(
    pm: &PointMass,
    input: &ProbeInput,
    output: PointMassOutput,
    horizons: &[f64],
    step: f64,
) -> Result<GainCurve, ManipError> {
    validate_horizons(horizons)?;
    let f = |t: f64| input.scalar(t);
    let traj = point_mass_response(pm, &f, *horizons.last().expect("validated"), step)?;
    let out: Vec<f64> = match output {
        PointMassOutput::Position => traj.x.iter().map(|v| v.abs()).collect(),
        PointMassOutput::Velocity => traj.xdot.iter().map(|v| v.abs()).collect(),
    };
    let inp: Vec<f64> = traj.f.iter().map(|v| v.abs()).collect();
    gain_curve_from_series(step, &out, &inp, horizons)
}

/// Gains with `α = 0`, which makes velocity the integrated output.
pub fn velocity_manipulability_config(gains: &GainSet) -> GainSet {
    GainSet { alpha: 0.0, ..*gains }
}
