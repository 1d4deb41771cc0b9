//! Rigid-body dynamics of a gravity-free 2R planar arm.
//!
//! The arm is parameterized by the minimal three-element vector
//! `θ = [θ1, θ2, θ3]` so that
//!
//! ```text
//! M(q) = [[θ1 + 2θ3 cos q2, θ2 + θ3 cos q2],
//!         [θ2 + θ3 cos q2,  θ2           ]]
//! ```
//!
//! and the Coriolis matrix is the Christoffel choice that makes `Ṁ − 2C`
//! skew-symmetric.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_util;

/// Determinant floor below which the inertia matrix is treated as singular.
pub const DEGENERATE_DET: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid dynamic parameters {theta:?}: {reason}")]
    InvalidParams { theta: [f64; 3], reason: &'static str },
    #[error("degenerate inertia matrix (det = {det:e}) at q = [{}, {}]", q[0], q[1])]
    DegenerateInertia { det: f64, q: [f64; 2] },
}

/// True dynamic parameter vector of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct DynParams {
    theta: Vector3<f64>,
}

impl DynParams {
    pub fn new(theta: Vector3<f64>) -> Result<Self, DynamicsError> {
        let err = |reason| DynamicsError::InvalidParams {
            theta: [theta[0], theta[1], theta[2]],
            reason,
        };
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(err("entries must be finite"));
        }
        if theta.iter().any(|&v| v <= 0.0) {
            return Err(err("all entries must be positive"));
        }
        if theta[1] * (theta[0] - theta[1]) <= theta[2] * theta[2] {
            return Err(err("θ2(θ1 − θ2) must exceed θ3²"));
        }
        Ok(Self { theta })
    }

    /// Unit links: m = 1 kg, l = 1 m, lc = 0.5 m, I = 1/12 kg·m².
    pub fn unit_links() -> Self {
        Self { theta: Vector3::new(5.0 / 3.0, 1.0 / 3.0, 0.5) }
    }

    /// Two identical uniform rods of the given mass and length, hinged at
    /// their ends: `lc = l/2`, `I = m l²/12`.
    pub fn uniform_rods(mass: f64, length: f64) -> Result<Self, DynamicsError> {
        let lc = 0.5 * length;
        let inertia = mass * length * length / 12.0;
        let theta2 = mass * lc * lc + inertia;
        Self::new(Vector3::new(
            mass * lc * lc + mass * (length * length + lc * lc) + 2.0 * inertia,
            theta2,
            mass * length * lc,
        ))
    }

    pub fn theta(&self) -> &Vector3<f64> {
        &self.theta
    }

    /// Lower bound on `λ_min(M(q))` over all configurations, from
    /// `λ_min ≥ min det M / max tr M`.
    pub fn inertia_eigen_floor(&self) -> f64 {
        let [t1, t2, t3] = [self.theta[0], self.theta[1], self.theta[2]];
        (t2 * (t1 - t2) - t3 * t3) / (t1 + t2 + 2.0 * t3)
    }
}

impl Default for DynParams {
    fn default() -> Self {
        Self::unit_links()
    }
}

impl TryFrom<[f64; 3]> for DynParams {
    type Error = DynamicsError;

    fn try_from(a: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(Vector3::new(a[0], a[1], a[2]))
    }
}

impl From<DynParams> for [f64; 3] {
    fn from(p: DynParams) -> Self {
        [p.theta[0], p.theta[1], p.theta[2]]
    }
}

/// Joint positions (rad) and velocities (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointState {
    #[serde(with = "serde_util::vec2")]
    pub q: Vector2<f64>,
    #[serde(with = "serde_util::vec2")]
    pub qdot: Vector2<f64>,
}

impl JointState {
    pub fn new(q: Vector2<f64>, qdot: Vector2<f64>) -> Self {
        Self { q, qdot }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    pub label: String,
    #[serde(default)]
    pub params: DynParams,
}

impl ArmModel {
    pub fn new(label: impl Into<String>, params: DynParams) -> Self {
        Self { label: label.into(), params }
    }
}

pub fn inertia(q: &Vector2<f64>, params: &DynParams) -> Matrix2<f64> {
    let t = params.theta();
    let c2 = q[1].cos();
    let off = t[1] + t[2] * c2;
    Matrix2::new(t[0] + 2.0 * t[2] * c2, off, off, t[1])
}

pub fn coriolis(q: &Vector2<f64>, qdot: &Vector2<f64>, params: &DynParams) -> Matrix2<f64> {
    let h = params.theta()[2] * q[1].sin();
    Matrix2::new(
        -h * qdot[1],
        -h * (qdot[0] + qdot[1]),
        h * qdot[0],
        0.0,
    )
}

/// Regressor `Y` with `Y(q, q̇, ζ, ζ̇) θ = M(q) ζ̇ + C(q, q̇) ζ`.
pub fn regressor(
    q: &Vector2<f64>,
    qdot: &Vector2<f64>,
    zeta: &Vector2<f64>,
    zetadot: &Vector2<f64>,
) -> Matrix2x3<f64> {
    let (s2, c2) = q[1].sin_cos();
    Matrix2x3::new(
        zetadot[0],
        zetadot[1],
        c2 * (2.0 * zetadot[0] + zetadot[1])
            - s2 * (qdot[1] * zeta[0] + (qdot[0] + qdot[1]) * zeta[1]),
        0.0,
        zetadot[0] + zetadot[1],
        c2 * zetadot[0] + s2 * qdot[0] * zeta[0],
    )
}

/// `q̈ = M(q)⁻¹ (τ − C(q, q̇) q̇)` with the closed-form 2×2 inverse.
pub fn forward_dynamics(
    state: &JointState,
    tau: &Vector2<f64>,
    params: &DynParams,
) -> Result<Vector2<f64>, DynamicsError> {
    let m = inertia(&state.q, params);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det > DEGENERATE_DET) {
        return Err(DynamicsError::DegenerateInertia {
            det,
            q: [state.q[0], state.q[1]],
        });
    }
    let rhs = tau - coriolis(&state.q, &state.qdot, params) * state.qdot;
    Ok(Vector2::new(
        (m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det,
        (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det,
    ))
}

pub fn kinetic_energy(state: &JointState, params: &DynParams) -> f64 {
    0.5 * state.qdot.dot(&(inertia(&state.q, params) * state.qdot))
}
