//! Fixed-step explicit integrators shared by the plant, the delayed LTV
//! simulator and the point-mass benchmark.

use std::ops::{Add, Mul};

/// One classical fourth-order Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<V, F>(f: &mut F, t: f64, x: &V, h: f64) -> V
where
    V: Clone + Add<V, Output = V> + Mul<f64, Output = V>,
    F: FnMut(f64, &V) -> V,
{
    let half = 0.5 * h;
    let k1 = f(t, x);
    let k2 = f(t + half, &(x.clone() + k1.clone() * half));
    let k3 = f(t + half, &(x.clone() + k2.clone() * half));
    let k4 = f(t + h, &(x.clone() + k3.clone() * h));
    x.clone() + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

pub fn euler_step<V, F>(f: &mut F, t: f64, x: &V, h: f64) -> V
where
    V: Clone + Add<V, Output = V> + Mul<f64, Output = V>,
    F: FnMut(f64, &V) -> V,
{
    x.clone() + f(t, x) * h
}

/// Number of whole steps of size `step` in `span`, tolerating float noise.
pub fn step_count(span: f64, step: f64) -> usize {
    (span / step + 1e-9).floor() as usize
}
