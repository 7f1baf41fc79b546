//! Library layer of the `modeguard` command-line tool.
//!
//! Everything the binary does lives here — pipeline orchestration, mission
//! generation, attack scenarios, and report rendering — so integration tests
//! can drive the exact code paths the binary runs without spawning
//! processes.

pub mod attack;
pub mod gen;
pub mod pipeline;
pub mod report;

use std::path::Path;

use modeguard_core::callgraph::DomainError;
use modeguard_core::instrument::InstrumentError;
use modeguard_core::ir::{Diagnostic, InvalidModule};
use modeguard_core::modeanalysis::{ModeAnalysisError, ModeConfigError};
use modeguard_core::runtime::{MissionParseError, RuntimeError};

/// User-facing errors grouped by the exit code they map to.
///
/// | code | category                                                  |
/// |------|-----------------------------------------------------------|
/// | 1    | usage: bad invocation or missing inputs                   |
/// | 2    | parse: an input file exists but is not well-formed        |
/// | 3    | analysis: validation, analysis, or execution rejected it  |
/// | 4    | enforcement: a guarded run tripped or a pipeline goal     |
/// |      | (zero false positives, all attacks detected) was missed   |
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Analysis(String),
    #[error("{0}")]
    Enforcement(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Analysis(_) => 3,
            CliError::Enforcement(_) => 4,
        }
    }

    /// Wrap an I/O failure with the path it concerns.
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {}", path.display(), err))
    }
}

impl From<Vec<Diagnostic>> for CliError {
    fn from(diags: Vec<Diagnostic>) -> Self {
        let text = diags
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("\n");
        CliError::Parse(text)
    }
}

impl From<InvalidModule> for CliError {
    fn from(err: InvalidModule) -> Self {
        CliError::Analysis(err.to_string())
    }
}

impl From<ModeAnalysisError> for CliError {
    fn from(err: ModeAnalysisError) -> Self {
        CliError::Analysis(err.to_string())
    }
}

impl From<ModeConfigError> for CliError {
    fn from(err: ModeConfigError) -> Self {
        match err {
            ModeConfigError::FileFormat { .. } => CliError::Parse(err.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }
}

impl From<MissionParseError> for CliError {
    fn from(err: MissionParseError) -> Self {
        CliError::Parse(err.to_string())
    }
}

impl From<RuntimeError> for CliError {
    fn from(err: RuntimeError) -> Self {
        CliError::Analysis(err.to_string())
    }
}

impl From<InstrumentError> for CliError {
    fn from(err: InstrumentError) -> Self {
        CliError::Analysis(err.to_string())
    }
}

impl From<DomainError> for CliError {
    fn from(err: DomainError) -> Self {
        CliError::Analysis(err.to_string())
    }
}
