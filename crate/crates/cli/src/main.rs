use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use manip_cli::commands::{self, ProbeOptions, RunOverrides, DEFAULT_WINDOW};
use manip_cli::input::{preset, EXTRA_PRESETS, PRESETS};
use manip_cli::{exit, CliError};
use manip_core::sim::IntegratorMode;

/// Simulate adaptive interactive arms, probe their manipulability and run
/// the delayed-LTV benchmark batteries.
///
/// Exit codes: 0 success, 1 a check failed, 2 the simulation diverged,
/// 3 the scenario or arguments were rejected.
#[derive(Debug, Parser)]
#[command(name = "manip", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Rk4,
    #[value(name = "paper_euler")]
    PaperEuler,
}

impl From<Mode> for IntegratorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Rk4 => IntegratorMode::Rk4,
            Mode::PaperEuler => IntegratorMode::PaperEuler,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Selector {
    Position,
    Velocity,
    #[value(name = "xi_centroid")]
    XiCentroid,
    #[value(name = "q_centroid")]
    QCentroid,
}

impl Selector {
    fn name(self) -> &'static str {
        match self {
            Selector::Position => "position",
            Selector::Velocity => "velocity",
            Selector::XiCentroid => "xi_centroid",
            Selector::QCentroid => "q_centroid",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write `<name>_trace.csv` and `<name>_summary.json`.
    Sim {
        /// Scenario file or preset name.
        scenario: String,
        /// Output directory [default: $MANIP_OUT_DIR or ./out].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Overrides the scenario seed (also reseeds the delay model).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the gain curve R(T) = ‖y‖₂ / ‖f‖₂ under a harmonic torque probe.
    Probe {
        scenario: String,
        #[arg(long, value_enum, default_value = "position")]
        output_selector: Selector,
        /// Robot receiving the probe and observed by per-robot outputs
        /// [default: the operator's robot].
        #[arg(long)]
        robot: Option<usize>,
        /// Comma-separated horizons in seconds.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
        /// Probe amplitude `a` in `a / (t + 1)`.
        #[arg(long, default_value_t = 5.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 0)]
        joint: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a benchmark battery (lemma1, lemma2 or lemma3); exit 0 iff all checks pass.
    Lemma {
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that the union graph over every window has a directed spanning tree.
    ///
    /// SCHEDULE is `fixture`, an arm preset name, a schedule file
    /// (`{"schedule": ..., "horizon": ..., "seed": ...}`) or a scenario file.
    /// Windows shorter than the dwell time judge single graphs and may fail
    /// even when longer windows pass.
    Graphs {
        schedule: String,
        /// Window length in seconds.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
    },
    /// List presets, or print one as a scenario file.
    Preset { name: Option<String> },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Sim { scenario, out, mode, seed } => {
            commands::cmd_sim(&scenario, &commands::default_out_dir(out), &RunOverrides { mode: mode.map(Into::into), seed })
        }
        Command::Probe { scenario, output_selector, robot, horizons, amplitude, joint, out, mode, seed } => {
            let opts = ProbeOptions { output: output_selector.name().into(), robot, horizons, amplitude, joint };
            commands::cmd_probe(
                &scenario,
                &commands::default_out_dir(out),
                &opts,
                &RunOverrides { mode: mode.map(Into::into), seed },
            )
        }
        Command::Lemma { suite, out } => commands::cmd_lemma(&suite, &commands::default_out_dir(out)),
        Command::Graphs { schedule, window } => commands::cmd_graphs(&schedule, window),
        Command::Preset { name: None } => {
            for p in PRESETS.iter().chain(&EXTRA_PRESETS) {
                println!("{p}");
            }
            Ok(exit::OK)
        }
        Command::Preset { name: Some(name) } => match preset(&name) {
            Some(p) => {
                println!("{}", p.to_json());
                Ok(exit::OK)
            }
            None => Err(CliError::Argument(format!("unknown preset {name}"))),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::SCHEMA } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
