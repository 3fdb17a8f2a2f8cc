//! Command-line and pipeline-stage arguments.
//!
//! Every subcommand's arguments double as the schema of the matching
//! pipeline stage: the same struct is parsed by clap from flags and by serde
//! from the stage object, with snake_case keys in place of --kebab-case flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lasiq_core::gate::DEFAULT_SOLVER_TOL;
use lasiq_core::yield_mc::DEFAULT_TRIALS;

#[derive(Debug, Parser)]
#[command(
    name = "lasiq",
    version,
    about = "Laser-anneal frequency trimming of transmon lattices"
)]
pub struct Cli {
    /// Top-level seed; every stage derives its own stream from it.
    #[arg(long, global = true, env = "LASIQ_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output file, or the working directory for `pipeline`. Without it,
    /// results go to stdout and no manifest is written.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel stages (default: all cores). Results do
    /// not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress progress and summary output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a heavy-hex chip topology, optionally populated with synthetic values.
    Lattice(LatticeArgs),
    /// Fit the resistance-to-frequency power law to a chip's measured f01.
    Fit(FitArgs),
    /// List nearest-neighbor frequency collisions.
    Collisions(CollisionsArgs),
    /// Monte Carlo collision-free yield against frequency scatter.
    Yield(YieldArgs),
    /// Generate a collision-free tuning plan.
    Plan(PlanArgs),
    /// Simulate the adaptive anneal of every tuned qubit in a plan.
    Anneal(AnnealArgs),
    /// Echoed cross-resonance gate error, at one detuning or over a sweep.
    GateError(GateErrorArgs),
    /// Static ZZ of a transmon pair.
    Zz(ZzArgs),
    /// Run a JSON pipeline of stages.
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lattice(_) => "lattice",
            Command::Fit(_) => "fit",
            Command::Collisions(_) => "collisions",
            Command::Yield(_) => "yield",
            Command::Plan(_) => "plan",
            Command::Anneal(_) => "anneal",
            Command::GateError(_) => "gate-error",
            Command::Zz(_) => "zz",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeArgs {
    /// falcon (27 qubits) or hummingbird (65 qubits).
    #[arg(long, conflicts_with_all = ["rows", "cols"], required_unless_present_all = ["rows", "cols"])]
    pub preset: Option<String>,
    #[arg(long, requires = "cols")]
    pub rows: Option<usize>,
    #[arg(long, requires = "rows")]
    pub cols: Option<usize>,
    /// Draw junction resistances and measured f01 instead of nominal values.
    #[arg(long)]
    #[serde(default)]
    pub synth: bool,
    #[arg(long, default_value_t = default_f_nominal())]
    #[serde(default = "default_f_nominal")]
    pub f_nominal_mhz: f64,
    #[arg(long, default_value_t = default_spread_rel())]
    #[serde(default = "default_spread_rel")]
    pub spread_rel: f64,
    #[arg(long, default_value_t = default_measurement_sigma())]
    #[serde(default = "default_measurement_sigma")]
    pub measurement_sigma_mhz: f64,
}

fn default_f_nominal() -> f64 {
    5150.0
}

fn default_spread_rel() -> f64 {
    0.02
}

fn default_measurement_sigma() -> f64 {
    18.1
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub chip: PathBuf,
    /// Fix the exponent instead of fitting it.
    #[arg(long, allow_hyphen_values = true)]
    pub pin_exponent: Option<f64>,
    /// Residuals CSV; defaults to `<out stem>_residuals.csv` next to the model.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionsArgs {
    #[arg(long)]
    pub chip: PathBuf,
    /// Frequencies CSV (qubit_id plus f_mhz, f_target_mhz or f01_mhz);
    /// defaults to the chip's measured f01.
    #[arg(long)]
    pub freqs: Option<PathBuf>,
    /// Collision bounds JSON; defaults to the single-multiplier bounds.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YieldArgs {
    #[arg(long)]
    pub chip: PathBuf,
    /// Plan CSV or frequencies CSV giving the nominal frequency of every qubit.
    #[arg(long)]
    pub targets: PathBuf,
    /// start:stop:step in MHz, inclusive.
    #[arg(long, default_value = "0:40:2")]
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: Grid,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[arg(long)]
    pub bounds: Option<PathBuf>,
}

fn default_sigma_grid() -> Grid {
    Grid {
        start: 0.0,
        stop: 40.0,
        step: 2.0,
    }
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanArgs {
    #[arg(long)]
    pub chip: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Plan constraints JSON; missing keys take their defaults.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealArgs {
    #[arg(long)]
    pub chip: PathBuf,
    /// Plan CSV; only rows with status `tuned` are annealed.
    #[arg(long)]
    pub targets: PathBuf,
    /// Anneal process JSON; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateErrorArgs {
    #[arg(long)]
    pub pair: PathBuf,
    /// Detuning grid start:stop:step in MHz, e.g. -400:400:10. Without it the
    /// pair is evaluated at its own detuning.
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<Grid>,
    #[arg(long, default_value_t = default_gate_time())]
    #[serde(default = "default_gate_time")]
    pub gate_time: f64,
    #[arg(long, default_value_t = DEFAULT_SOLVER_TOL)]
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Skip the rotary-tone optimization.
    #[arg(long)]
    #[serde(default)]
    pub no_rotary: bool,
}

fn default_gate_time() -> f64 {
    400.0
}

fn default_solver_tol() -> f64 {
    DEFAULT_SOLVER_TOL
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZzArgs {
    #[arg(long)]
    pub pair: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline JSON: {"stages": [{"stage": "fit", "out": "model.json", ...}]}.
    #[arg(long)]
    pub config: PathBuf,
}

/// Inclusive arithmetic grid written `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // Multiply rather than accumulate so grid points are exact.
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("expected start:stop:step, got {s:?}"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
        let g = Grid {
            start: num(a)?,
            stop: num(b)?,
            step: num(c)?,
        };
        if !(g.start.is_finite() && g.stop.is_finite() && g.step.is_finite()) {
            return Err(format!("grid {s:?} is not finite"));
        }
        if !(g.step > 0.0 && g.stop >= g.start) {
            return Err(format!("grid {s:?} needs step > 0 and stop ≥ start"));
        }
        if (g.stop - g.start) / g.step > 1e6 {
            return Err(format!("grid {s:?} has too many points"));
        }
        Ok(g)
    }
}

impl TryFrom<String> for Grid {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> String {
        g.to_string()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}
