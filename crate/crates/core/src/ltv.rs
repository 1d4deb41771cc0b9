//! Delayed linear time-varying systems `ẋ = Σ_k A_k(t) x(t − T_k(t)) + u`,
//! `y = C(t) x`, with empirical checkers for exponential decay, IBIBO
//! boundedness, L_p outputs and differential-bounded-state behavior.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::DiGraph;
use crate::ode::{rk4_step, step_count};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtvError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("horizon and step must be positive (got {horizon}, {step})")]
    BadGrid { horizon: f64, step: f64 },
    #[error("step {step} exceeds a quarter of the smallest positive delay {min_delay}")]
    StepTooLarge { step: f64, min_delay: f64 },
    #[error("input has dimension {got}, system has {expected}")]
    InputDim { expected: usize, got: usize },
}

/// Row-major matrix, as written in benchmark files.
pub type Rows = Vec<Vec<f64>>;

fn to_matrix(rows: &Rows) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// Induced ∞-norm (max absolute row sum).
fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn from_matrix(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSignal {
    Constant { rows: Rows },
    /// `base + amplitude · sin(ω t)`.
    Sinusoidal { base: Rows, amplitude: Rows, omega: f64 },
}

impl MatrixSignal {
    pub fn constant(m: DMatrix<f64>) -> Self {
        MatrixSignal::Constant { rows: from_matrix(&m) }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        match self {
            MatrixSignal::Constant { rows } => to_matrix(rows),
            MatrixSignal::Sinusoidal { base, amplitude, omega } => {
                to_matrix(base) + to_matrix(amplitude) * (omega * t).sin()
            }
        }
    }

    fn shape(&self) -> Option<(usize, usize)> {
        let shape_of = |rows: &Rows| {
            let c = rows.first().map_or(0, Vec::len);
            rows.iter().all(|r| r.len() == c).then_some((rows.len(), c))
        };
        match self {
            MatrixSignal::Constant { rows } => shape_of(rows),
            MatrixSignal::Sinusoidal { base, amplitude, .. } => {
                let s = shape_of(base)?;
                (shape_of(amplitude)? == s).then_some(s)
            }
        }
    }

    /// Analytic sup of the induced ∞-norm.
    pub fn norm_bound(&self) -> f64 {
        match self {
            MatrixSignal::Constant { rows } => inf_norm(&to_matrix(rows)),
            MatrixSignal::Sinusoidal { base, amplitude, .. } => {
                inf_norm(&to_matrix(base)) + inf_norm(&to_matrix(amplitude))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelaySignal {
    Constant { value: f64 },
    /// `base + amplitude · sin(ω t)`.
    Sinusoidal { base: f64, amplitude: f64, omega: f64 },
}

impl DelaySignal {
    pub const ZERO: DelaySignal = DelaySignal::Constant { value: 0.0 };

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DelaySignal::Constant { value } => value,
            DelaySignal::Sinusoidal { base, amplitude, omega } => base + amplitude * (omega * t).sin(),
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn max(&self) -> f64 {
        match *self {
            DelaySignal::Constant { value } => value,
            DelaySignal::Sinusoidal { base, amplitude, .. } => base + amplitude.abs(),
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            DelaySignal::Constant { value } => value,
            DelaySignal::Sinusoidal { base, amplitude, .. } => base - amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    Zero,
    Constant { v: Vec<f64> },
    /// `v / (t + 1)`.
    Harmonic { v: Vec<f64> },
    /// `v · e^{−rate t}`.
    Exponential { v: Vec<f64>, rate: f64 },
    /// `v · sin(ω t)`.
    Sine { v: Vec<f64>, omega: f64 },
    /// Zero-order hold of samples; zero before the first time.
    Tabulated { times: Vec<f64>, values: Vec<Vec<f64>> },
    Sum { parts: Vec<InputSignal> },
}

impl InputSignal {
    pub fn eval(&self, t: f64, dim: usize) -> DVector<f64> {
        let scaled = |v: &[f64], a: f64| DVector::from_iterator(dim, v.iter().map(|x| x * a));
        match self {
            InputSignal::Zero => DVector::zeros(dim),
            InputSignal::Constant { v } => scaled(v, 1.0),
            InputSignal::Harmonic { v } => scaled(v, 1.0 / (t + 1.0)),
            InputSignal::Exponential { v, rate } => scaled(v, (-rate * t).exp()),
            InputSignal::Sine { v, omega } => scaled(v, (omega * t).sin()),
            InputSignal::Tabulated { times, values } => {
                let idx = times.partition_point(|&ts| ts <= t + 1e-12);
                if idx == 0 {
                    DVector::zeros(dim)
                } else {
                    scaled(&values[idx - 1], 1.0)
                }
            }
            InputSignal::Sum { parts } => {
                parts.iter().fold(DVector::zeros(dim), |acc, p| acc + p.eval(t, dim))
            }
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            InputSignal::Zero => vec![],
            InputSignal::Constant { v }
            | InputSignal::Harmonic { v }
            | InputSignal::Exponential { v, .. }
            | InputSignal::Sine { v, .. } => vec![v.len()],
            InputSignal::Tabulated { values, .. } => values.iter().map(Vec::len).collect(),
            InputSignal::Sum { parts } => parts.iter().flat_map(InputSignal::dims).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtvTerm {
    pub coefficient: MatrixSignal,
    pub delay: DelaySignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayedLTVSystem {
    pub dim: usize,
    pub terms: Vec<LtvTerm>,
    pub output: MatrixSignal,
    /// Initial state; the history on `[−T_max, 0]` is held at this value.
    pub x0: Vec<f64>,
    /// Declared uniform bound on the delays.
    pub max_delay: f64,
    /// Declared uniform bound on the coefficient and output norms.
    pub coefficient_bound: f64,
    /// Declared `1 − ε` bound on `Ṫ_k`, if any.
    #[serde(default)]
    pub delay_rate_bound: Option<f64>,
}

impl DelayedLTVSystem {
    /// `ẋ = Σ A_k x(t − T_k)`, `y = x`, with bounds taken from the data.
    pub fn new(terms: Vec<(DMatrix<f64>, DelaySignal)>, x0: Vec<f64>) -> Self {
        let dim = x0.len();
        let terms: Vec<LtvTerm> = terms
            .into_iter()
            .map(|(a, d)| LtvTerm { coefficient: MatrixSignal::constant(a), delay: d })
            .collect();
        let mut sys = Self {
            dim,
            output: MatrixSignal::constant(DMatrix::identity(dim, dim)),
            max_delay: terms.iter().map(|t| t.delay.max()).fold(0.0, f64::max),
            coefficient_bound: 0.0,
            delay_rate_bound: None,
            terms,
            x0,
        };
        sys.coefficient_bound = sys.natural_bound();
        sys
    }

    pub fn with_output(mut self, c: DMatrix<f64>) -> Self {
        self.output = MatrixSignal::constant(c);
        self.coefficient_bound = self.natural_bound();
        self
    }

    pub fn with_rate_bound(mut self, bound: f64) -> Self {
        self.delay_rate_bound = Some(bound);
        self
    }

    fn natural_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient.norm_bound())
            .chain([self.output.norm_bound()])
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LtvError> {
        let bad = |m: String| Err(LtvError::InvalidSystem(m));
        if self.dim == 0 || self.x0.len() != self.dim {
            return bad(format!("x0 has {} entries for dimension {}", self.x0.len(), self.dim));
        }
        for (k, term) in self.terms.iter().enumerate() {
            if term.coefficient.shape() != Some((self.dim, self.dim)) {
                return bad(format!("term {k} coefficient is not {0}×{0}", self.dim));
            }
            if term.delay.min() < 0.0 || !term.delay.max().is_finite() {
                return bad(format!("term {k} delay is negative or unbounded"));
            }
            if term.delay.max() > self.max_delay + 1e-12 {
                return bad(format!("term {k} delay exceeds the declared maximum {}", self.max_delay));
            }
        }
        match self.output.shape() {
            Some((_, c)) if c == self.dim => {}
            _ => return bad("output matrix has the wrong column count".into()),
        }
        // Declared coefficient bound, checked on a sample grid.
        for i in 0..200 {
            let t = i as f64 * 0.37;
            let over = self
                .terms
                .iter()
                .map(|term| inf_norm(&term.coefficient.eval(t)))
                .chain([inf_norm(&self.output.eval(t))])
                .any(|v| v > self.coefficient_bound + 1e-12);
            if over {
                return bad(format!("coefficient exceeds the declared bound at t = {t}"));
            }
        }
        Ok(())
    }

    fn min_positive_delay(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter(|t| !t.delay.is_zero())
            .map(|t| t.delay.min())
            .min_by(f64::total_cmp)
    }

    /// Largest finite-difference `Ṫ_k` over `[0, horizon]`.
    pub fn observed_delay_rate(&self, horizon: f64) -> f64 {
        let dt = 1e-4;
        let samples = 4000;
        let mut worst = f64::NEG_INFINITY;
        for term in &self.terms {
            for i in 0..samples {
                let t = horizon * i as f64 / samples as f64;
                worst = worst.max((term.delay.eval(t + dt) - term.delay.eval(t)) / dt);
            }
        }
        if worst == f64::NEG_INFINITY {
            0.0
        } else {
            worst
        }
    }
}

/// Recorded signals of one LTV simulation on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalProbe {
    pub step: f64,
    pub times: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub int_u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub xdot: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lp {
    One,
    Two,
    Inf,
}

/// Running `L_p` norm of uniformly sampled magnitudes (trapezoid rule).
pub fn running_lp(mags: &[f64], dt: f64, p: Lp) -> Vec<f64> {
    let mut out = Vec::with_capacity(mags.len());
    let mut acc = 0.0f64;
    for (k, &m) in mags.iter().enumerate() {
        match p {
            Lp::Inf => acc = acc.max(m),
            Lp::One if k > 0 => acc += 0.5 * dt * (mags[k - 1] + m),
            Lp::Two if k > 0 => acc += 0.5 * dt * (mags[k - 1].powi(2) + m * m),
            _ => {}
        }
        out.push(if p == Lp::Two { acc.sqrt() } else { acc });
    }
    out
}

/// Relative growth below which a running norm is taken as converged.
pub const CONVERGENCE_GROWTH: f64 = 1e-3;
/// Trailing fraction of the horizon inspected by the growth rules.
pub const TRAILING_FRACTION: f64 = 0.25;
/// Trailing-sup ratio below which a signal is taken as vanishing.
pub const VANISHING_RATIO: f64 = 1e-2;
/// Required margin on fitted decay slopes.
pub const DECAY_MARGIN: f64 = 1e-2;

fn trailing_start(len: usize) -> usize {
    ((1.0 - TRAILING_FRACTION) * (len - 1) as f64).floor() as usize
}

/// A non-decreasing running norm has converged when it grew by less than
/// [`CONVERGENCE_GROWTH`] (relative) over the trailing window.
pub fn running_norm_converged(running: &[f64]) -> bool {
    let Some(&last) = running.last() else { return true };
    let earlier = running[trailing_start(running.len())];
    if last <= 1e-12 {
        return true;
    }
    last.is_finite() && (last - earlier) <= CONVERGENCE_GROWTH * last
}

/// Trailing-window sup is at most [`VANISHING_RATIO`] of the overall sup.
pub fn vanishes(mags: &[f64]) -> bool {
    if mags.is_empty() {
        return true;
    }
    let overall = mags.iter().copied().fold(0.0, f64::max);
    let tail = mags[trailing_start(mags.len())..].iter().copied().fold(0.0, f64::max);
    tail <= VANISHING_RATIO * overall
}

pub fn is_bounded(mags: &[f64], dt: f64) -> bool {
    running_norm_converged(&running_lp(mags, dt, Lp::Inf))
}

impl SignalProbe {
    pub fn norms(series: &[DVector<f64>]) -> Vec<f64> {
        series.iter().map(|v| v.norm()).collect()
    }

    pub fn running_norm(&self, series: &[DVector<f64>], p: Lp) -> Vec<f64> {
        running_lp(&Self::norms(series), self.step, p)
    }

    pub fn y_sup(&self) -> f64 {
        Self::norms(&self.y).into_iter().fold(0.0, f64::max)
    }

    /// `F_D(x) = ẋ − u` at every sample.
    pub fn drift(&self) -> Vec<DVector<f64>> {
        self.xdot.iter().zip(&self.u).map(|(xd, u)| xd - u).collect()
    }
}

pub fn simulate_ltv(
    sys: &DelayedLTVSystem,
    u: &InputSignal,
    horizon: f64,
    step: f64,
) -> Result<SignalProbe, LtvError> {
    simulate_ltv_from(sys, 0.0, &sys.x0, u, horizon, step)
}

/// Simulates from start time `t0` with constant history `x0`. The input is
/// evaluated in the shifted clock `t − t0`.
pub fn simulate_ltv_from(
    sys: &DelayedLTVSystem,
    t0: f64,
    x0: &[f64],
    u: &InputSignal,
    horizon: f64,
    step: f64,
) -> Result<SignalProbe, LtvError> {
    if !(horizon > 0.0 && step > 0.0 && horizon.is_finite() && step.is_finite()) {
        return Err(LtvError::BadGrid { horizon, step });
    }
    sys.validate()?;
    if let Some(min_delay) = sys.min_positive_delay() {
        if step > min_delay / 4.0 + 1e-15 {
            return Err(LtvError::StepTooLarge { step, min_delay });
        }
    }
    if let Some(&got) = u.dims().iter().find(|&&d| d != sys.dim) {
        return Err(LtvError::InputDim { expected: sys.dim, got });
    }
    let dim = sys.dim;
    let steps = step_count(horizon, step);
    let start = DVector::from_column_slice(x0);
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(steps + 1);
    xs.push(start.clone());

    let delayed = |xs: &[DVector<f64>], t_abs: f64| -> DVector<f64> {
        // Zero-order hold on the stored grid; constant history before t0.
        let rel = t_abs - t0;
        if rel <= 0.0 {
            return start.clone();
        }
        let k = ((rel / step) + 1e-9).floor() as usize;
        xs[k.min(xs.len() - 1)].clone()
    };
    let rhs = |xs: &[DVector<f64>], t_abs: f64, x: &DVector<f64>| -> DVector<f64> {
        let mut dx = u.eval(t_abs - t0, dim);
        for term in &sys.terms {
            let a = term.coefficient.eval(t_abs);
            if term.delay.is_zero() {
                dx += a * x;
            } else {
                dx += a * delayed(xs, t_abs - term.delay.eval(t_abs));
            }
        }
        dx
    };

    for k in 0..steps {
        let t = t0 + k as f64 * step;
        let x = xs[k].clone();
        let next = {
            let hist = &xs;
            let mut f = |tt: f64, xx: &DVector<f64>| rhs(hist, tt, xx);
            rk4_step(&mut f, t, &x, step)
        };
        xs.push(next);
    }

    let mut probe = SignalProbe {
        step,
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        int_u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        xdot: Vec::with_capacity(steps + 1),
    };
    let mut acc = DVector::zeros(dim);
    for (k, x) in xs.iter().enumerate() {
        let t_abs = t0 + k as f64 * step;
        let uk = u.eval(k as f64 * step, dim);
        if k > 0 {
            acc += (&probe.u[k - 1] + &uk) * (0.5 * step);
        }
        probe.xdot.push(rhs(&xs, t_abs, x));
        probe.y.push(sys.output.eval(t_abs) * x);
        probe.u.push(uk);
        probe.int_u.push(acc.clone());
        probe.times.push(k as f64 * step);
        probe.x.push(x.clone());
    }
    Ok(probe)
}

/// Least-squares slope of `ln‖y‖` against `t` over the second half of the
/// run, ignoring samples that reached the underflow floor.
pub fn fit_decay_rate(probe: &SignalProbe) -> f64 {
    const FLOOR: f64 = 1e-250;
    let half = probe.times.len() / 2;
    let pick = |from: usize| -> Vec<(f64, f64)> {
        probe.times[from..]
            .iter()
            .zip(&probe.y[from..])
            .map(|(t, y)| (*t, y.norm()))
            .filter(|(_, n)| *n > FLOOR)
            .map(|(t, n)| (t, n.ln()))
            .collect()
    };
    let mut pts = pick(half);
    if pts.len() < 10 {
        pts = pick(0);
    }
    if pts.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub decays: bool,
    pub rates: Vec<f64>,
    /// Largest (least negative) fitted slope.
    pub worst_rate: f64,
}

/// Fits decay rates from randomized constant histories and start times.
pub fn check_uniform_exp_decay(
    sys: &DelayedLTVSystem,
    trials: usize,
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<DecayReport, LtvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(f64, Vec<f64>)> = (0..trials)
        .map(|_| {
            let t0 = rng.random_range(0.0..10.0);
            let x0 = (0..sys.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            (t0, x0)
        })
        .collect();
    let rates = starts
        .par_iter()
        .map(|(t0, x0)| simulate_ltv_from(sys, *t0, x0, &InputSignal::Zero, horizon, step).map(|p| fit_decay_rate(&p)))
        .collect::<Result<Vec<f64>, LtvError>>()?;
    let worst_rate = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayReport { decays: !rates.is_empty() && worst_rate <= -DECAY_MARGIN, rates, worst_rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiboCase {
    pub label: String,
    /// `∫u` stayed bounded, so the case is covered by the lemma.
    pub covered: bool,
    pub int_u_sup: f64,
    pub y_sup: f64,
    pub y_bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiboReport {
    pub cases: Vec<IbiboCase>,
    /// Every covered case has bounded output.
    pub holds: bool,
}

pub fn verify_ibibo(
    sys: &DelayedLTVSystem,
    inputs: &[(String, InputSignal)],
    horizon: f64,
    step: f64,
) -> Result<IbiboReport, LtvError> {
    let cases = inputs
        .par_iter()
        .map(|(label, u)| {
            let p = simulate_ltv(sys, u, horizon, step)?;
            let int_mags = SignalProbe::norms(&p.int_u);
            let y_mags = SignalProbe::norms(&p.y);
            Ok(IbiboCase {
                label: label.clone(),
                covered: is_bounded(&int_mags, step),
                int_u_sup: int_mags.iter().copied().fold(0.0, f64::max),
                y_sup: p.y_sup(),
                y_bounded: is_bounded(&y_mags, step),
            })
        })
        .collect::<Result<Vec<_>, LtvError>>()?;
    let holds = cases.iter().all(|c| !c.covered || c.y_bounded);
    Ok(IbiboReport { cases, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub p: Lp,
    /// Declared rate bound is below one and the sampled `Ṫ_k` respect it.
    pub rate_condition: bool,
    pub observed_rate: f64,
    /// `∫u + c` has a converged running `L_p` norm.
    pub input_condition: bool,
    pub y_norm: f64,
    pub y_converged: bool,
    /// Hypotheses hold and the output norm converged.
    pub holds: bool,
}

/// `c` defaults to `−∫₀^T u`, which makes `∫u + c` vanish at the end.
pub fn verify_lp_output(
    sys: &DelayedLTVSystem,
    u: &InputSignal,
    p: Lp,
    c: Option<&[f64]>,
    horizon: f64,
    step: f64,
) -> Result<LpReport, LtvError> {
    let probe = simulate_ltv(sys, u, horizon, step)?;
    let observed_rate = sys.observed_delay_rate(horizon);
    let rate_condition = match sys.delay_rate_bound {
        Some(b) => b < 1.0 && observed_rate <= b + 1e-6,
        None => observed_rate < 1.0,
    };
    let offset = match c {
        Some(c) => DVector::from_column_slice(c),
        None => -probe.int_u.last().cloned().unwrap_or_else(|| DVector::zeros(sys.dim)),
    };
    let shifted: Vec<f64> = probe.int_u.iter().map(|v| (v + &offset).norm()).collect();
    let input_condition = running_norm_converged(&running_lp(&shifted, step, p));
    let y_run = probe.running_norm(&probe.y, p);
    let y_converged = running_norm_converged(&y_run);
    Ok(LpReport {
        p,
        rate_condition,
        observed_rate,
        input_condition,
        y_norm: y_run.last().copied().unwrap_or(0.0),
        y_converged,
        holds: rate_condition && input_condition && y_converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Implication {
    pub premise: String,
    pub premise_holds: bool,
    pub conclusion_holds: bool,
}

impl Implication {
    pub fn ok(&self) -> bool {
        !self.premise_holds || self.conclusion_holds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbdsCase {
    pub label: String,
    pub implications: Vec<Implication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbdsReport {
    /// Unforced state settles to a constant.
    pub marginally_stable: bool,
    pub cases: Vec<DbdsCase>,
    pub holds: bool,
}

pub fn verify_dbds(
    sys: &DelayedLTVSystem,
    inputs: &[(String, InputSignal)],
    horizon: f64,
    step: f64,
) -> Result<DbdsReport, LtvError> {
    let free = simulate_ltv(sys, &InputSignal::Zero, horizon, step)?;
    let marginally_stable = vanishes(&SignalProbe::norms(&free.xdot));
    let cases = inputs
        .par_iter()
        .map(|(label, u)| {
            let p = simulate_ltv(sys, u, horizon, step)?;
            let u_mags = SignalProbe::norms(&p.u);
            let xd_mags = SignalProbe::norms(&p.xdot);
            let drift_mags = SignalProbe::norms(&p.drift());
            let int_mags = SignalProbe::norms(&p.int_u);
            let imp = |premise: &str, a: bool, b: bool| Implication {
                premise: premise.to_string(),
                premise_holds: a,
                conclusion_holds: b,
            };
            let l2 = |m: &[f64]| running_norm_converged(&running_lp(m, step, Lp::Two));
            Ok(DbdsCase {
                label: label.clone(),
                implications: vec![
                    imp("u bounded ⇒ ẋ bounded", is_bounded(&u_mags, step), is_bounded(&xd_mags, step)),
                    imp("u ∈ L2 ⇒ ẋ ∈ L2", l2(&u_mags), l2(&xd_mags)),
                    imp("u → 0 ⇒ ẋ → 0", vanishes(&u_mags), vanishes(&xd_mags)),
                    imp("∫u bounded ⇒ F_D(x) bounded", is_bounded(&int_mags, step), is_bounded(&drift_mags, step)),
                ],
            })
        })
        .collect::<Result<Vec<_>, LtvError>>()?;
    let holds = marginally_stable && cases.iter().all(|c| c.implications.iter().all(Implication::ok));
    Ok(DbdsReport { marginally_stable, cases, holds })
}

/// `ẋ_i = −Σ_j w_ij (x_i − x_j(t − T))` on a single coordinate.
pub fn consensus_system(graph: &DiGraph, delay: DelaySignal, x0: Vec<f64>) -> DelayedLTVSystem {
    let n = graph.n();
    let w = graph.weights().clone();
    let degree = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| w.row(i).sum()));
    if delay.is_zero() {
        DelayedLTVSystem::new(vec![(w - degree, DelaySignal::ZERO)], x0)
    } else {
        DelayedLTVSystem::new(vec![(-degree, DelaySignal::ZERO), (w, delay)], x0)
    }
}

/// Rows `e_i − e_{i+1}`: consecutive pairwise differences.
pub fn difference_output(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n - 1, n, |r, c| {
        if c == r {
            1.0
        } else if c == r + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(SuiteCheck { name: name.to_string(), passed, detail });
    }
}

pub const SUITES: [&str; 3] = ["lemma1", "lemma2", "lemma3"];

const SUITE_STEP: f64 = 0.01;
const SUITE_HORIZON: f64 = 400.0;

fn scalar(a: f64, delay: DelaySignal) -> DelayedLTVSystem {
    DelayedLTVSystem::new(vec![(DMatrix::from_element(1, 1, a), delay)], vec![1.0])
}

/// Three-vertex directed cycle, which has a spanning tree.
fn ring3() -> DiGraph {
    DiGraph::from_pairs(3, &[(0, 2), (1, 0), (2, 1)]).expect("valid ring")
}

fn v1(a: f64) -> Vec<f64> {
    vec![a]
}

/// Shared battery behind the delayed `lemma1` and undelayed `lemma2` suites.
fn integral_bounded_suite(name: &str, delay: DelaySignal) -> Result<SuiteReport, LtvError> {
    let mut rep = SuiteReport { suite: name.to_string(), checks: vec![] };
    let stable = scalar(-1.0, delay);

    let decay = check_uniform_exp_decay(&stable, 8, 20.0, SUITE_STEP, 7)?;
    rep.push("scalar decay", decay.decays, format!("worst rate {:.4}", decay.worst_rate));

    let cons = consensus_system(&ring3(), delay, vec![1.0, -0.5, 0.2]).with_output(difference_output(3));
    let decay = check_uniform_exp_decay(&cons, 8, 20.0, SUITE_STEP, 11)?;
    rep.push("consensus differences decay", decay.decays, format!("worst rate {:.4}", decay.worst_rate));

    let marginal = scalar(0.0, DelaySignal::ZERO);
    let decay = check_uniform_exp_decay(&marginal, 2, 20.0, SUITE_STEP, 3)?;
    rep.push("marginal system rejected", !decay.decays, format!("worst rate {:.4}", decay.worst_rate));

    let inputs = vec![
        ("sin t".to_string(), InputSignal::Sine { v: v1(1.0), omega: 1.0 }),
        ("e^-t".to_string(), InputSignal::Exponential { v: v1(1.0), rate: 1.0 }),
        ("1/(t+1)".to_string(), InputSignal::Harmonic { v: v1(1.0) }),
        ("constant".to_string(), InputSignal::Constant { v: v1(1.0) }),
    ];
    let ib = verify_ibibo(&stable, &inputs, SUITE_HORIZON, SUITE_STEP)?;
    let coverage: Vec<bool> = ib.cases.iter().map(|c| c.covered).collect();
    rep.push(
        "ibibo bounded outputs",
        ib.holds && coverage == [true, true, false, false],
        format!("coverage {coverage:?}, y sups {:?}", ib.cases.iter().map(|c| c.y_sup).collect::<Vec<_>>()),
    );
    let ib = verify_ibibo(&cons, &inputs[..2].iter().map(|(l, u)| (l.clone(), widen(u, 3))).collect::<Vec<_>>(), SUITE_HORIZON, SUITE_STEP)?;
    rep.push("ibibo consensus differences", ib.holds && ib.cases.iter().all(|c| c.covered), String::new());

    let lp = verify_lp_output(&stable, &InputSignal::Exponential { v: v1(-1.0), rate: 1.0 }, Lp::Two, Some(&[1.0]), SUITE_HORIZON, SUITE_STEP)?;
    rep.push("y ∈ L2 for ∫u + c ∈ L2", lp.holds, format!("‖y‖₂ = {:.6}", lp.y_norm));
    let lp = verify_lp_output(&stable, &InputSignal::Zero, Lp::Two, Some(&[0.0]), SUITE_HORIZON, SUITE_STEP)?;
    rep.push("y ∈ L2 unforced", lp.holds, format!("‖y‖₂ = {:.6}", lp.y_norm));
    let lp = verify_lp_output(&stable, &InputSignal::Sine { v: v1(1.0), omega: 1.0 }, Lp::Inf, None, SUITE_HORIZON, SUITE_STEP)?;
    rep.push("y ∈ L∞ for bounded ∫u", lp.holds, format!("‖y‖∞ = {:.6}", lp.y_norm));

    if !delay.is_zero() {
        let fast = DelayedLTVSystem::new(
            vec![(DMatrix::from_element(1, 1, -1.0), DelaySignal::Sinusoidal { base: 0.5, amplitude: 0.4, omega: 5.0 })],
            vec![1.0],
        );
        let lp = verify_lp_output(&fast, &InputSignal::Exponential { v: v1(-1.0), rate: 1.0 }, Lp::Two, Some(&[1.0]), 100.0, SUITE_STEP)?;
        rep.push(
            "fast-varying delay flagged",
            !lp.rate_condition && !lp.holds,
            format!("observed Ṫ max {:.3}", lp.observed_rate),
        );
    }
    Ok(rep)
}

fn widen(u: &InputSignal, dim: usize) -> InputSignal {
    let spread = |v: &[f64]| (0..dim).map(|i| v[0] * (1.0 + i as f64) / dim as f64).collect::<Vec<_>>();
    match u {
        InputSignal::Sine { v, omega } => InputSignal::Sine { v: spread(v), omega: *omega },
        InputSignal::Exponential { v, rate } => InputSignal::Exponential { v: spread(v), rate: *rate },
        InputSignal::Harmonic { v } => InputSignal::Harmonic { v: spread(v) },
        InputSignal::Constant { v } => InputSignal::Constant { v: spread(v) },
        other => other.clone(),
    }
}

fn lemma3_suite() -> Result<SuiteReport, LtvError> {
    let mut rep = SuiteReport { suite: "lemma3".to_string(), checks: vec![] };
    let integrator = DelayedLTVSystem::new(vec![], vec![0.0]);
    let inputs = vec![
        ("sin t".to_string(), InputSignal::Sine { v: v1(1.0), omega: 1.0 }),
        ("e^-t".to_string(), InputSignal::Exponential { v: v1(1.0), rate: 1.0 }),
    ];
    let r = verify_dbds(&integrator, &inputs, SUITE_HORIZON, SUITE_STEP)?;
    rep.push("single integrator", r.holds, format!("{:?}", r.cases.iter().map(|c| c.implications.iter().map(Implication::ok).collect::<Vec<_>>()).collect::<Vec<_>>()));

    let v = vec![1.0, -0.5, 0.25];
    let inputs = vec![
        ("e^-t".to_string(), InputSignal::Exponential { v: v.clone(), rate: 1.0 }),
        ("1/(t+1)".to_string(), InputSignal::Harmonic { v: v.clone() }),
        ("sin t".to_string(), InputSignal::Sine { v: v.clone(), omega: 1.0 }),
        ("constant".to_string(), InputSignal::Constant { v: v.clone() }),
    ];
    for (label, delay) in [("consensus", DelaySignal::ZERO), ("delayed consensus", DelaySignal::Constant { value: 0.3 })] {
        let sys = consensus_system(&ring3(), delay, vec![1.0, -1.0, 0.5]);
        let r = verify_dbds(&sys, &inputs, SUITE_HORIZON, SUITE_STEP)?;
        // The decaying inputs must actually exercise the L2 and vanishing rules.
        let exercised = r.cases[..2].iter().all(|c| c.implications[1].premise_holds && c.implications[2].premise_holds);
        rep.push(label, r.holds && exercised, format!("marginally stable: {}", r.marginally_stable));
    }
    Ok(rep)
}

pub fn run_suite(name: &str) -> Result<SuiteReport, LtvError> {
    match name {
        "lemma1" => integral_bounded_suite("lemma1", DelaySignal::Constant { value: 0.1 }),
        "lemma2" => integral_bounded_suite("lemma2", DelaySignal::ZERO),
        "lemma3" => lemma3_suite(),
        other => Err(LtvError::InvalidSystem(format!("unknown suite {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_exponential_closed_form() {
        let sys = scalar(-1.0, DelaySignal::ZERO);
        let p = simulate_ltv(&sys, &InputSignal::Zero, 1.0, 0.01).unwrap();
        assert!((p.x.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn delayed_scalar_decays() {
        let sys = scalar(-1.0, DelaySignal::Constant { value: 0.1 });
        let p = simulate_ltv(&sys, &InputSignal::Zero, 30.0, 0.01).unwrap();
        assert!(fit_decay_rate(&p) < -DECAY_MARGIN);
    }

    #[test]
    fn decay_rate_of_unit_system() {
        let r = check_uniform_exp_decay(&scalar(-1.0, DelaySignal::ZERO), 5, 20.0, 0.01, 1).unwrap();
        assert!(r.decays);
        for rate in r.rates {
            assert!((rate + 1.0).abs() < 0.05, "{rate}");
        }
        let r = check_uniform_exp_decay(&scalar(0.0, DelaySignal::ZERO), 3, 20.0, 0.01, 1).unwrap();
        assert!(!r.decays);
    }

    #[test]
    fn grid_and_step_errors() {
        let sys = scalar(-1.0, DelaySignal::Constant { value: 0.1 });
        assert!(matches!(simulate_ltv(&sys, &InputSignal::Zero, 0.0, 0.01), Err(LtvError::BadGrid { .. })));
        assert!(matches!(simulate_ltv(&sys, &InputSignal::Zero, 1.0, -0.01), Err(LtvError::BadGrid { .. })));
        assert!(matches!(simulate_ltv(&sys, &InputSignal::Zero, 1.0, 0.05), Err(LtvError::StepTooLarge { .. })));
        let bad = InputSignal::Constant { v: vec![1.0, 2.0] };
        assert!(matches!(simulate_ltv(&sys, &bad, 1.0, 0.01), Err(LtvError::InputDim { .. })));
    }

    #[test]
    fn declared_bounds_are_checked() {
        let mut sys = scalar(-1.0, DelaySignal::Constant { value: 0.1 });
        sys.max_delay = 0.05;
        assert!(sys.validate().is_err());
        let mut sys = scalar(-3.0, DelaySignal::ZERO);
        sys.coefficient_bound = 1.0;
        assert!(sys.validate().is_err());
    }

    #[test]
    fn ibibo_flags_constant_input() {
        let sys = scalar(-1.0, DelaySignal::Constant { value: 0.1 });
        let inputs = vec![
            ("harmonic".to_string(), InputSignal::Harmonic { v: v1(1.0) }),
            ("sine".to_string(), InputSignal::Sine { v: v1(1.0), omega: 1.0 }),
            ("constant".to_string(), InputSignal::Constant { v: v1(2.0) }),
        ];
        let r = verify_ibibo(&sys, &inputs, 200.0, 0.01).unwrap();
        assert!(r.holds);
        assert!(r.cases[0].y_bounded);
        assert!(r.cases[1].covered && r.cases[1].y_bounded);
        assert!(!r.cases[2].covered);
    }

    #[test]
    fn lp_output_cases() {
        let sys = scalar(-1.0, DelaySignal::Constant { value: 0.2 }).with_rate_bound(0.0);
        let r = verify_lp_output(&sys, &InputSignal::Zero, Lp::Two, Some(&[0.0]), 100.0, 0.01).unwrap();
        assert!(r.holds);
        let u = InputSignal::Exponential { v: v1(-1.0), rate: 1.0 };
        let r = verify_lp_output(&sys, &u, Lp::Two, Some(&[1.0]), 200.0, 0.01).unwrap();
        assert!(r.holds, "{r:?}");
        let r = verify_lp_output(&sys, &u, Lp::Two, None, 200.0, 0.01).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn dbds_single_integrator() {
        let sys = DelayedLTVSystem::new(vec![], vec![0.0]);
        let r = verify_dbds(&sys, &[("sin".into(), InputSignal::Sine { v: v1(1.0), omega: 1.0 })], 100.0, 0.01).unwrap();
        assert!(r.holds);
        let drift = simulate_ltv(&sys, &InputSignal::Sine { v: v1(1.0), omega: 1.0 }, 10.0, 0.01).unwrap().drift();
        assert!(drift.iter().all(|d| d[0] == 0.0));
    }

    #[test]
    fn running_norms_monotone() {
        let mags: Vec<f64> = (0..1000).map(|k| ((k as f64) * 0.05).cos().abs()).collect();
        for p in [Lp::One, Lp::Two, Lp::Inf] {
            let r = running_lp(&mags, 0.01, p);
            assert!(r.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn tabulated_input_is_zero_order_hold() {
        let u = InputSignal::Tabulated { times: vec![0.0, 1.0], values: vec![vec![1.0], vec![2.0]] };
        assert_eq!(u.eval(-0.5, 1)[0], 0.0);
        assert_eq!(u.eval(0.5, 1)[0], 1.0);
        assert_eq!(u.eval(1.0, 1)[0], 2.0);
        assert_eq!(u.eval(9.0, 1)[0], 2.0);
    }

    #[test]
    fn system_serde_round_trip() {
        let sys = consensus_system(&ring3(), DelaySignal::Constant { value: 0.3 }, vec![1.0, 0.0, 0.0]);
        let text = serde_json::to_string(&sys).unwrap();
        let back: DelayedLTVSystem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sys);
    }
}
