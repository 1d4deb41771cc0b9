use std::path::{Path, PathBuf};

use manip_core::ltv::{run_suite, SUITES};
use manip_core::manipulability::{
    default_horizons, estimate_gain_curve, hinf_point_mass, log_grid, point_mass_gain_curve, point_mass_response,
    Damping, GainProbe, GrowthClass, HinfReport, OutputSelector, PointMass, PointMassOutput, PointMassScenario,
    ProbeInput,
};
use manip_core::sim::{torque_reflection_check, ControllerKind, EnvironmentModel, IntegratorMode, ReflectionVerdict};
use manip_core::{run_scenario, Scenario, Trace};

use crate::input::{load_schedule, load_scenario, ScenarioFile};
use crate::output::{
    point_mass_csv, sha256_hex, to_json, trace_csv, write_file, Assertion, PointMassSummary, ProbeSummary,
    SimSummary,
};
use crate::{exit, CliError};

/// Convergence band used by the summary assertions.
pub const REACH_TOLERANCE: f64 = 0.05;
pub const SETTLING_BAND: f64 = 0.1;
pub const REFLECTION_TOLERANCE: f64 = 0.02;
pub const REFLECTION_WINDOW: f64 = 10.0;
pub const DEFAULT_WINDOW: f64 = 0.45;

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub mode: Option<IntegratorMode>,
    pub seed: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, sc: &mut Scenario) {
        if let Some(m) = self.mode {
            sc.integrator = m;
        }
        if let Some(s) = self.seed {
            sc.set_seed(s);
        }
    }
}

fn schema(origin: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Schema { path: origin.to_string(), message: e.to_string() }
}

fn scenario_hash(file: &ScenarioFile) -> String {
    sha256_hex(file.to_json().as_bytes())
}

fn prepared_arm(spec: &str, sc: &Scenario, ov: &RunOverrides) -> Result<Scenario, CliError> {
    let mut sc = sc.clone();
    ov.apply(&mut sc);
    sc.validate().map_err(|e| schema(spec, e))?;
    Ok(sc)
}

fn prepared_point_mass(spec: &str, pm: &PointMassScenario) -> Result<(), CliError> {
    pm.point_mass.validate().map_err(|e| schema(spec, e))?;
    if !(pm.horizon > 0.0 && pm.horizon.is_finite()) {
        return Err(schema(spec, "horizon must be positive"));
    }
    if !(pm.step > 0.0 && pm.step <= pm.horizon) {
        return Err(schema(spec, "step must be positive and at most the horizon"));
    }
    Ok(())
}

fn point_mass_hinf(pm: &PointMass) -> Option<HinfReport> {
    match pm.damping {
        Damping::Constant { .. } => hinf_point_mass(pm, &log_grid(1e-6, 1e3, 400)).ok(),
        Damping::Sinusoidal { .. } => None,
    }
}

fn hinf_assertions(pm: &PointMass, h: &HinfReport) -> Vec<Assertion> {
    let inv_b = 1.0 / pm.b_min();
    vec![
        Assertion::new("position_gain_infinite", h.position.infinite, format!("log-slope flag {}", h.position.infinite)),
        Assertion::new(
            "velocity_gain_is_inverse_damping",
            !h.velocity.infinite && (h.velocity.sup - inv_b).abs() < 1e-6,
            format!("sup {} vs 1/b {}", h.velocity.sup, inv_b),
        ),
    ]
}

pub fn summarize_arm(sc: &Scenario, trace: &Trace, trace_sha256: String) -> SimSummary {
    let last = trace.last();
    let target = sc.operator.target();
    let consensus = trace.consensus_error_at(last);
    let target_err = target.map(|q| trace.target_error_at(last, &q));
    let op_torque = sc.operator.attached_robot().map(|i| trace.robots[i].tau_ext[last].amax());
    let settling_time = match target {
        Some(q) => trace.settling_time(SETTLING_BAND, |k| trace.target_error_at(k, &q)),
        None => trace.settling_time(SETTLING_BAND, |k| trace.consensus_error_at(k)),
    };
    let settling_times = (0..sc.n())
        .map(|i| {
            let r = &trace.robots[i];
            match target {
                Some(q) => trace.settling_time(SETTLING_BAND, |k| (r.q[k] - q).amax()),
                None => trace.settling_time(SETTLING_BAND, |k| (r.q[k] - trace.q_centroid(k)).amax()),
            }
        })
        .collect();

    let mut assertions = vec![Assertion::new("finite_trace", true, format!("{} samples", trace.len()))];
    // In contact the environment holds the arms away from the target.
    let free = sc.environment == EnvironmentModel::None;
    if free && sc.n() > 1 {
        assertions.push(Assertion::new(
            "consensus",
            consensus < REACH_TOLERANCE,
            format!("max pairwise error {consensus:.3e} (tolerance {REACH_TOLERANCE})"),
        ));
    }
    if let Some(e) = target_err.filter(|_| free) {
        assertions.push(Assertion::new(
            "target_reached",
            e < REACH_TOLERANCE,
            format!("max ‖q(end) − q_h‖∞ {e:.3e} (tolerance {REACH_TOLERANCE})"),
        ));
    }
    let reflection = match (sc.controller, &sc.environment) {
        (ControllerKind::Teleop, EnvironmentModel::Spring { .. }) => {
            let master = sc.operator.attached_robot().unwrap_or(0);
            let rep = torque_reflection_check(trace, master, REFLECTION_WINDOW, REFLECTION_TOLERANCE);
            assertions.push(Assertion::new(
                "torque_reflection",
                rep.verdict == ReflectionVerdict::Holds,
                format!("{:?}: master error {:.3e}, gap {:.3e}, scale {:.3e}", rep.verdict, rep.master_error, rep.reflection_gap, rep.operator_scale),
            ));
            Some(rep)
        }
        _ => None,
    };

    SimSummary {
        scenario: sc.name.clone(),
        scenario_sha256: scenario_hash(&ScenarioFile::Arm(Box::new(sc.clone()))),
        trace_sha256,
        seed: sc.seed,
        integrator: serde_json::to_value(sc.integrator).expect("enum").as_str().unwrap_or_default().to_string(),
        horizon: sc.horizon,
        samples: trace.len(),
        final_consensus_error: consensus,
        final_target_error: target_err,
        final_operator_torque: op_torque,
        settling_band: SETTLING_BAND,
        settling_time,
        settling_times,
        s_l2_norms: (0..sc.n()).map(|i| trace.s_l2_norm(i)).collect(),
        torque_reflection: reflection,
        warnings: trace.warnings.clone(),
        assertions,
    }
}

/// Runs an arm scenario and returns the trace CSV with its summary.
pub fn simulate_arm(sc: &Scenario) -> Result<(Vec<u8>, SimSummary), CliError> {
    let trace = run_scenario(sc)?;
    let csv = trace_csv(&trace);
    let summary = summarize_arm(sc, &trace, sha256_hex(&csv));
    Ok((csv, summary))
}

pub fn simulate_point_mass(pm: &PointMassScenario) -> Result<(Vec<u8>, PointMassSummary), CliError> {
    let f = |t: f64| pm.input.scalar(t);
    let traj = point_mass_response(&pm.point_mass, &f, pm.horizon, pm.step)?;
    let residual = traj.first_integral_residual(&pm.point_mass).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let csv = point_mass_csv(&traj);
    let hinf = point_mass_hinf(&pm.point_mass);
    let mut assertions = vec![Assertion::new(
        "first_integral",
        residual < 1e-5,
        format!("max |m(ẋ − ẋ(0)) + ∫bẋ − ∫f| = {residual:.3e}"),
    )];
    if let Some(h) = &hinf {
        assertions.extend(hinf_assertions(&pm.point_mass, h));
    }
    let summary = PointMassSummary {
        scenario: pm.name.clone(),
        scenario_sha256: scenario_hash(&ScenarioFile::PointMass(pm.clone())),
        trace_sha256: sha256_hex(&csv),
        samples: traj.times.len(),
        max_first_integral_residual: residual,
        hinf,
        assertions,
    };
    Ok((csv, summary))
}

fn stem(name: &str) -> &str {
    if name.is_empty() {
        "scenario"
    } else {
        name
    }
}

fn report_assertions(assertions: &[Assertion]) {
    for a in assertions {
        println!("  {} {}: {}", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
    }
}

pub fn cmd_sim(spec: &str, out: &Path, ov: &RunOverrides) -> Result<i32, CliError> {
    let file = load_scenario(spec)?;
    let (name, csv, summary_json, assertions) = match &file {
        ScenarioFile::Arm(sc) => {
            let sc = prepared_arm(spec, sc, ov)?;
            let (csv, s) = simulate_arm(&sc)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            (sc.name.clone(), csv, to_json(&s), s.assertions)
        }
        ScenarioFile::PointMass(pm) => {
            prepared_point_mass(spec, pm)?;
            if ov.mode.is_some() || ov.seed.is_some() {
                eprintln!("note: --mode and --seed do not apply to point-mass scenarios");
            }
            let (csv, s) = simulate_point_mass(pm)?;
            (pm.name.clone(), csv, to_json(&s), s.assertions)
        }
    };
    let trace_path = write_file(out, &format!("{}_trace.csv", stem(&name)), &csv)?;
    let summary_path = write_file(out, &format!("{}_summary.json", stem(&name)), &summary_json)?;
    println!("{}: wrote {} and {}", stem(&name), trace_path.display(), summary_path.display());
    report_assertions(&assertions);
    Ok(exit::OK)
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub output: String,
    pub robot: Option<usize>,
    pub horizons: Option<Vec<f64>>,
    pub amplitude: f64,
    pub joint: usize,
}

fn selector(name: &str, robot: usize) -> Result<OutputSelector, CliError> {
    Ok(match name {
        "position" => OutputSelector::PositionIncrement { robot },
        "velocity" => OutputSelector::Velocity { robot },
        "xi_centroid" => OutputSelector::XiCentroid,
        "q_centroid" => OutputSelector::QCentroid,
        other => return Err(CliError::Argument(format!("unknown output selector {other}"))),
    })
}

fn class_name(c: GrowthClass) -> String {
    serde_json::to_value(c).expect("enum").as_str().unwrap_or_default().to_string()
}

pub fn cmd_probe(spec: &str, out: &Path, opts: &ProbeOptions, ov: &RunOverrides) -> Result<i32, CliError> {
    let file = load_scenario(spec)?;
    let horizons = opts.horizons.clone().unwrap_or_else(default_horizons);
    let input = ProbeInput::Harmonic { amplitude: opts.amplitude, joint: opts.joint };
    let summary = match &file {
        ScenarioFile::Arm(sc) => {
            let sc = prepared_arm(spec, sc, ov)?;
            let robot = opts.robot.or_else(|| sc.operator.attached_robot()).unwrap_or(0);
            if robot >= sc.n() {
                return Err(CliError::Argument(format!("robot {robot} out of range for {} robots", sc.n())));
            }
            let probe = GainProbe { input, robot, output: selector(&opts.output, robot)?, horizons };
            let curve = estimate_gain_curve(&sc, &probe)?;
            ProbeSummary {
                scenario: sc.name.clone(),
                scenario_sha256: scenario_hash(&ScenarioFile::Arm(Box::new(sc.clone()))),
                seed: sc.seed,
                output: opts.output.clone(),
                gain_curve: curve,
                hinf: None,
                assertions: Vec::new(),
            }
        }
        ScenarioFile::PointMass(pm) => {
            prepared_point_mass(spec, pm)?;
            let output = match opts.output.as_str() {
                "position" => PointMassOutput::Position,
                "velocity" => PointMassOutput::Velocity,
                other => return Err(CliError::Argument(format!("point-mass output must be position or velocity, got {other}"))),
            };
            let curve = point_mass_gain_curve(&pm.point_mass, &input, output, &horizons, pm.step)?;
            let hinf = point_mass_hinf(&pm.point_mass);
            let mut assertions = Vec::new();
            if let Some(h) = &hinf {
                let flag = match output {
                    PointMassOutput::Position => h.position.infinite,
                    PointMassOutput::Velocity => h.velocity.infinite,
                };
                let agrees = match curve.class {
                    GrowthClass::InfiniteDeg1 => flag,
                    GrowthClass::Finite => !flag,
                    GrowthClass::Inconclusive => false,
                };
                assertions.push(Assertion::new(
                    "matches_hinf",
                    agrees,
                    format!("probe class {} vs analytic infinite = {flag}", class_name(curve.class)),
                ));
            }
            ProbeSummary {
                scenario: pm.name.clone(),
                scenario_sha256: scenario_hash(&file),
                seed: 0,
                output: opts.output.clone(),
                gain_curve: curve,
                hinf,
                assertions,
            }
        }
    };
    let path = write_file(out, &format!("{}_probe_summary.json", stem(&summary.scenario)), &to_json(&summary))?;
    println!("{}: classification {} ({})", stem(&summary.scenario), class_name(summary.gain_curve.class), path.display());
    for p in &summary.gain_curve.points {
        println!("  T = {:>8}  R = {:.6e}", p.horizon, p.ratio);
    }
    report_assertions(&summary.assertions);
    Ok(if summary.assertions.iter().all(|a| a.passed) { exit::OK } else { exit::CHECK_FAILED })
}

pub fn cmd_lemma(suite: &str, out: &Path) -> Result<i32, CliError> {
    if !SUITES.contains(&suite) {
        return Err(CliError::Argument(format!("unknown suite {suite}; expected one of {}", SUITES.join(", "))));
    }
    let report = run_suite(suite)?;
    let path = write_file(out, &format!("{suite}_report.json"), &to_json(&report))?;
    println!("{suite}: {} ({})", if report.passed() { "pass" } else { "FAIL" }, path.display());
    for c in &report.checks {
        println!("  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.passed() { exit::OK } else { exit::CHECK_FAILED })
}

pub fn cmd_graphs(spec: &str, window: f64) -> Result<i32, CliError> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(CliError::Argument("window must be positive".into()));
    }
    let file = load_schedule(spec)?;
    let sched = file.build()?;
    let verdicts = sched.window_verdicts(window);
    let failed = verdicts.iter().filter(|v| !v.passed()).count();
    for v in &verdicts {
        match v.root {
            Some(r) => println!("[{:.3}, {:.3})  pass  root {}", v.start, v.end, r + 1),
            None => println!("[{:.3}, {:.3})  FAIL  no spanning tree", v.start, v.end),
        }
    }
    let dwell = sched.dwell_min();
    println!("windows {}, failed {failed}, window {window} s, minimum dwell {dwell:.3} s", verdicts.len());
    if window < dwell {
        println!("note: the window is shorter than the dwell time, so single graphs are judged alone");
    }
    match sched.longest_connecting_interval() {
        Some(t) => println!("longest jointly connecting interval {t:.3} s"),
        None => println!("the tail of the schedule has no jointly connected interval"),
    }
    Ok(if failed == 0 { exit::OK } else { exit::CHECK_FAILED })
}

pub fn default_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(crate::OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}
