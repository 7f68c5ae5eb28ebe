//! `ddsvc`: scenario files in, JSON and CSV reports out.
//!
//! Exit codes: 0 on success, 1 on a scenario or domain error (a JSON error
//! object goes to standard error), 2 on a usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dd_core::scenario::ScenarioError;

mod commands;
pub mod output;

pub use output::Format;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{message}")]
    Domain { kind: &'static str, message: String },
    #[error("cannot read allocation {path}: {message}")]
    Allocation { path: String, message: String },
    /// The report was emitted but its check did not pass.
    #[error("{0}")]
    CheckFailed(String),
    #[error("output error: {0}")]
    Io(String),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<dd_core::Error> for CliError {
    fn from(e: dd_core::Error) -> Self {
        use dd_core::Error as E;
        let kind = match &e {
            E::Model(_) => "model",
            E::Adequacy(_) => "adequacy",
            E::Procurement(_) => "procurement",
            E::Lp(_) => "lp",
            E::Market(_) => "market",
            E::Identical(_) => "identical",
            E::Spot(_) => "spot",
            E::Scenario(_) => "scenario",
        };
        Self::Domain {
            kind,
            message: e.to_string(),
        }
    }
}

impl CliError {
    /// The object written to standard error.
    pub fn to_json(&self) -> Value {
        let message = self.to_string();
        let body = match self {
            Self::Scenario(ScenarioError::Parse {
                field,
                line,
                column,
                ..
            }) => json!({
                "kind": "scenario_parse",
                "message": message,
                "field": field,
                "line": line,
                "column": column,
            }),
            Self::Scenario(ScenarioError::Invalid { field, .. }) => {
                json!({"kind": "scenario_invalid", "message": message, "field": field})
            }
            Self::Scenario(ScenarioError::Missing(section)) => {
                json!({"kind": "scenario_missing", "message": message, "field": section})
            }
            Self::Scenario(ScenarioError::Io { path, .. }) => {
                json!({"kind": "io", "message": message, "path": path})
            }
            Self::Domain { kind, .. } => json!({"kind": kind, "message": message}),
            Self::Allocation { path, .. } => {
                json!({"kind": "allocation", "message": message, "path": path})
            }
            Self::CheckFailed(_) => json!({"kind": "check_failed", "message": message}),
            Self::Io(_) => json!({"kind": "io", "message": message}),
        };
        json!({ "error": body })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ddsvc",
    version,
    about = "Duration-differentiated energy services"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Write `<subcommand>.json` / `<subcommand>.csv` here instead of stdout.
    #[arg(long, env = "DD_OUT_DIR", global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// The scenario file, positional or via `--scenario`.
#[derive(Debug, Clone, Args)]
pub struct Input {
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    pub file: Option<PathBuf>,
    #[arg(long, value_name = "SCENARIO", conflicts_with = "file")]
    pub scenario: Option<PathBuf>,
}

impl Input {
    pub fn path(&self) -> &Path {
        self.file
            .as_deref()
            .or(self.scenario.as_deref())
            .expect("clap enforces one scenario path")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Simple,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Concave,
    Convex,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact and simple adequacy of the supply for the demand.
    Adequacy {
        #[command(flatten)]
        input: Input,
    },
    /// Causal LLDF allocation of the supply.
    Schedule {
        #[command(flatten)]
        input: Input,
    },
    /// Least supplemental power making the supply adequate.
    Procure {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = TargetArg::Simple)]
        target: TargetArg,
        /// Price per kW; defaults to the scenario's `unit_cost`, then 0.
        #[arg(long)]
        unit_cost: Option<f64>,
    },
    /// Welfare-maximizing contract mix and its multipliers.
    Welfare {
        #[command(flatten)]
        input: Input,
    },
    /// Welfare optimum plus equilibrium prices and their verification.
    Equilibrium {
        #[command(flatten)]
        input: Input,
    },
    /// Identical-consumer equilibrium menu.
    Identical {
        #[command(flatten)]
        input: Input,
        #[arg(long = "case", value_enum)]
        case: CaseArg,
        /// Lower end of the power search range.
        #[arg(long, default_value_t = 1e-8)]
        min_power: f64,
        /// Upper end of the power search range.
        #[arg(long, default_value_t = 1e6)]
        max_power: f64,
    },
    /// Spot versus DD zero-profit prices.
    Spot {
        #[command(flatten)]
        input: Input,
        /// Monte Carlo draws when the supply law is not enumerable.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Prices in the profit table.
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Checks an allocation against the scenario.
    Validate {
        #[command(flatten)]
        input: Input,
        /// Schedule JSON or a bare `{"slots": ...}` allocation.
        #[arg(long)]
        allocation: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Simple)]
        mode: ModeArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Simple,
    Exact,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let fail = |err: &mut dyn Write, e: &CliError| {
        let _ = writeln!(err, "{}", e.to_json());
        EXIT_DOMAIN
    };
    let report = match commands::execute(&cli.command) {
        Ok(r) => r,
        Err(e) => return fail(err, &e),
    };
    if let Err(e) = output::emit(&report.report, cli.format, cli.out_dir.as_deref(), out) {
        return fail(err, &e);
    }
    match report.check {
        Some(message) => fail(err, &CliError::CheckFailed(message)),
        None => EXIT_OK,
    }
}
