//! Scenario runner for the numerical checks in `finsler-core`.
//!
//! Each command reads a [`ScenarioConfig`], writes `<command>.csv` and
//! `<command>_summary.json` into the output directory, and maps its result to
//! an exit code: 0 when every assertion holds, 2 for a configuration error,
//! 3 when an assertion or hypothesis fails, 1 for other numerical failures.

pub mod commands;
pub mod config;
pub mod csv;
pub mod summary;

use std::path::Path;
use std::time::Instant;

pub use commands::{run, Command, Outcome};
pub use config::{BarConfig, ScenarioConfig, Side};
pub use summary::{Assertion, RunSummary, VERSION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("hypothesis violated: {what} (witness: {witness})")]
    Hypothesis { what: String, witness: String },
    #[error("numerical failure: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Hypothesis { .. } => 3,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

/// What a run produced, for callers that want more than the exit code.
#[derive(Debug, Clone)]
pub struct Execution {
    pub exit_code: i32,
    pub summary: Option<RunSummary>,
    pub error: Option<CliError>,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), text).map_err(|e| CliError::Io(format!("{}: {e}", dir.join(name).display())))
}

/// Runs `command`, writes its outputs into `out` and returns the exit code
/// with the summary. A hypothesis failure still produces a summary.
pub fn execute(command: Command, cfg: &ScenarioConfig, out: &Path) -> Execution {
    let start = Instant::now();
    let result = run(command, cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let (mut summary, csv, error) = match result {
        Ok(o) => (o.summary, Some(o.csv), None),
        Err(e @ CliError::Hypothesis { .. }) => {
            let mut s = RunSummary::new(command.name(), cfg);
            if let CliError::Hypothesis { what, witness } = &e {
                s.assert(Assertion::holds(what, false, Some(witness.clone())));
            }
            (s, None, Some(e))
        }
        Err(e) => {
            return Execution {
                exit_code: e.exit_code(),
                summary: None,
                error: Some(e),
            }
        }
    };
    summary.wall_time_seconds = elapsed;
    let io = std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
        .and_then(|_| match &csv {
            Some(t) => write(out, &format!("{}.csv", command.name()), t.text()),
            None => Ok(()),
        })
        .and_then(|_| write(out, &format!("{}_summary.json", command.name()), &summary.to_json()));
    if let Err(e) = io {
        return Execution {
            exit_code: e.exit_code(),
            summary: Some(summary),
            error: Some(e),
        };
    }
    let exit_code = match &error {
        Some(e) => e.exit_code(),
        None if summary.passed => 0,
        None => 3,
    };
    Execution {
        exit_code,
        summary: Some(summary),
        error,
    }
}
