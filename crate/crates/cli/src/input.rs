use std::path::Path;

use manip_core::manipulability::{pointmass_preset, PointMassScenario};
use manip_core::network::{fixture_triple, GraphSchedule, SwitchingMode};
use manip_core::sim::{presets, ScheduleSpec};
use manip_core::Scenario;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Preset names accepted wherever a scenario path is expected.
pub const PRESETS: [&str; 7] =
    ["teaching_lm6", "teaching_lm0", "consensus_switching", "consensus_delayed", "teleop_lm10", "teleop_lm1", "pointmass"];

/// Extra presets kept for comparisons and ablations.
pub const EXTRA_PRESETS: [&str; 3] = ["teaching_lm2", "consensus_switching_lm0", "teleop_spring"];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ScenarioFile {
    Arm(Box<Scenario>),
    PointMass(PointMassScenario),
}

impl ScenarioFile {
    pub fn name(&self) -> &str {
        match self {
            ScenarioFile::Arm(s) => &s.name,
            ScenarioFile::PointMass(p) => &p.name,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn preset(name: &str) -> Option<ScenarioFile> {
    if name == "pointmass" {
        return Some(ScenarioFile::PointMass(pointmass_preset()));
    }
    presets::by_name(name).map(|s| ScenarioFile::Arm(Box::new(s)))
}

/// Parses a scenario document. Documents with a `point_mass` key are point-mass
/// benchmarks; everything else must be an arm scenario.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioFile, CliError> {
    let schema = |e: serde_json::Error| CliError::Schema { path: origin.to_string(), message: e.to_string() };
    let value: serde_json::Value = serde_json::from_str(text).map_err(schema)?;
    let file = if value.get("point_mass").is_some() {
        ScenarioFile::PointMass(serde_json::from_value(value).map_err(schema)?)
    } else {
        ScenarioFile::Arm(Box::new(serde_json::from_value(value).map_err(schema)?))
    };
    if let ScenarioFile::Arm(sc) = &file {
        if sc.name.is_empty() {
            let stem = Path::new(origin).file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            let mut sc = sc.clone();
            sc.name = stem.to_string();
            return Ok(ScenarioFile::Arm(sc));
        }
    }
    Ok(file)
}

/// Resolves a preset name or reads a scenario file.
pub fn load_scenario(spec: &str) -> Result<ScenarioFile, CliError> {
    if let Some(p) = preset(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    parse_scenario(&text, spec)
}

/// Stand-alone schedule document for the `graphs` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub schedule: ScheduleSpec,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScheduleFile {
    pub fn build(&self) -> Result<GraphSchedule, CliError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Argument("schedule horizon must be positive".into()));
        }
        Ok(self.schedule.build(self.horizon, self.seed)?)
    }
}

/// Fixture graphs switched every 150 ms, each block of three slots a random
/// permutation, over 60 s.
pub fn fixture_schedule() -> ScheduleFile {
    ScheduleFile {
        schedule: ScheduleSpec::RandomSwitching {
            graphs: fixture_triple().to_vec(),
            period: 0.15,
            mode: SwitchingMode::Shuffled,
        },
        horizon: 60.0,
        seed: 0,
    }
}

/// Accepts `fixture`, an arm preset name, a schedule file or a scenario file.
pub fn load_schedule(spec: &str) -> Result<ScheduleFile, CliError> {
    let from_scenario = |sc: Scenario, origin: &str| {
        sc.schedule
            .clone()
            .map(|schedule| ScheduleFile { schedule, horizon: sc.horizon, seed: sc.seed })
            .ok_or_else(|| CliError::Schema { path: origin.to_string(), message: "scenario has no schedule".into() })
    };
    if spec == "fixture" {
        return Ok(fixture_schedule());
    }
    if let Some(sc) = presets::by_name(spec) {
        return from_scenario(sc, spec);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    let schema = |e: serde_json::Error| CliError::Schema { path: spec.to_string(), message: e.to_string() };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(schema)?;
    if value.get("robots").is_some() {
        from_scenario(serde_json::from_value(value).map_err(schema)?, spec)
    } else {
        serde_json::from_value(value).map_err(schema)
    }
}
