//! Adaptive networked control of two-link manipulators: arm dynamics,
//! adaptive and networked controllers, switching graphs with delays, a
//! delayed LTV test bench, the closed-loop simulator and manipulability
//! probes.

// `!(x > 0.0)` forms are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod dynamics;
pub mod ltv;
pub mod manipulability;
pub mod network;
pub mod ode;
pub mod serde_util;
pub mod sim;

pub use controllers::{AdaptiveState, ControlOutput, GainSet};
pub use dynamics::{ArmModel, DynParams, JointState};
pub use network::{DelayModel, DiGraph, GraphSchedule};
pub use sim::{run_scenario, Scenario, Trace};
