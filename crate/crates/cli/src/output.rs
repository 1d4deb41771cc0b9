use std::io::Write;
use std::path::{Path, PathBuf};

use manip_core::manipulability::{GainCurve, HinfReport, PointMassTrajectory};
use manip_core::sim::TorqueReflectionReport;
use manip_core::Trace;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Trace columns contributed by each robot.
pub const COLUMNS_PER_ROBOT: usize = 15;

pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n {
        for (prefix, dim) in [("q", 2), ("qd", 2), ("z", 2), ("s", 2), ("th", 3), ("tau", 2), ("tauh", 2)] {
            h.extend((1..=dim).map(|j| format!("{prefix}{i}_{j}")));
        }
    }
    h
}

/// Serializes a trace as CSV. `f64` values use the shortest representation
/// that round-trips, so identical traces give identical bytes.
pub fn trace_csv(trace: &Trace) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(trace.robots.len())).expect("in-memory write");
    let mut row = Vec::with_capacity(1 + COLUMNS_PER_ROBOT * trace.robots.len());
    for k in 0..trace.len() {
        row.clear();
        row.push(trace.times[k].to_string());
        for r in &trace.robots {
            let cols = r.q[k]
                .iter()
                .chain(r.qdot[k].iter())
                .chain(r.z[k].iter())
                .chain(r.s[k].iter())
                .chain(r.theta_hat[k].iter())
                .chain(r.tau[k].iter())
                .chain(r.tau_ext[k].iter());
            row.extend(cols.map(|v| v.to_string()));
        }
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn point_mass_csv(traj: &PointMassTrajectory) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "x", "xd", "f"]).expect("in-memory write");
    for k in 0..traj.times.len() {
        w.write_record([traj.times[k], traj.x[k], traj.xdot[k], traj.f[k]].map(|v| v.to_string()))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub scenario: String,
    pub scenario_sha256: String,
    pub trace_sha256: String,
    pub seed: u64,
    pub integrator: String,
    pub horizon: f64,
    pub samples: usize,
    pub final_consensus_error: f64,
    pub final_target_error: Option<f64>,
    pub final_operator_torque: Option<f64>,
    pub settling_band: f64,
    /// Last exit from the band of the target error, or of the consensus
    /// error when there is no operator target.
    pub settling_time: Option<f64>,
    pub settling_times: Vec<Option<f64>>,
    pub s_l2_norms: Vec<f64>,
    pub torque_reflection: Option<TorqueReflectionReport>,
    pub warnings: Vec<String>,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMassSummary {
    pub scenario: String,
    pub scenario_sha256: String,
    pub trace_sha256: String,
    pub samples: usize,
    pub max_first_integral_residual: f64,
    pub hinf: Option<HinfReport>,
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSummary {
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub output: String,
    pub gain_curve: GainCurve,
    pub hinf: Option<HinfReport>,
    pub assertions: Vec<Assertion>,
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("summary serializes");
    v.push(b'\n');
    v
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).map_err(|source| CliError::Write { path: path.clone(), source })?;
    f.write_all(bytes).map_err(|source| CliError::Write { path: path.clone(), source })?;
    Ok(path)
}
