//! Command-line surface for the spectral transfer entropy toolkit:
//! signal simulation, the STE test matrix, the Granger-causality
//! baseline, table-style simulation experiments, and standalone BH
//! adjustment. Every output file is accompanied by a run manifest that
//! records the command, configuration, seed, and input hashes.

pub mod args;
pub mod commands;
pub mod csvio;
pub mod manifest;

use ste_core::SteError;

/// Process exit codes: 0 success, 2 config error, 3 data error,
/// 4 numerical failure.
pub fn exit_code_for(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) => 2,
        CliError::Data(_) => 3,
        CliError::Numerical(_) => 4,
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn classify(e: &SteError) -> u8 {
    match e {
        SteError::Config(_) | SteError::InvalidBand { .. } => 2,
        SteError::TooShort { .. } => 3,
        SteError::Stage { source, .. } => classify(source),
        _ => 4,
    }
}

impl From<SteError> for CliError {
    fn from(e: SteError) -> CliError {
        match classify(&e) {
            2 => CliError::Config(e.to_string()),
            3 => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Data(format!("I/O: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> CliError {
        CliError::Data(format!("CSV: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::Config(format!("JSON: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
