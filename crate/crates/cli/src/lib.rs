//! Commands behind the `tlv` binary, callable in-process.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};

pub use commands::*;
pub use config::{EvalConfig, ExperimentConfig, SweepConfig, TrainOverrides, SCHEMA_VERSION};
pub use manifest::{Invocation, Manifest, RunStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

/// Environment variable naming the default artifact root.
pub const ARTIFACT_ROOT_VAR: &str = "TLV_ARTIFACT_ROOT";

#[derive(Debug)]
pub enum CliError {
    Core(tlv_core::Error),
    /// Unreadable or malformed user input.
    Input(String),
    /// Invalid configuration or violated constraint.
    Config(String),
    /// A required artifact from an earlier run is absent.
    Missing(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use tlv_core::Error as E;
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Missing(_) => EXIT_MISSING,
            CliError::Core(e) => match e {
                E::Format { .. } | E::Io { .. } | E::Argument(_) | E::Dimension(_) => EXIT_INPUT,
                E::Config(_) | E::Plan(_) | E::Capacity { .. } => EXIT_CONFIG,
                E::Unavailable(_) => EXIT_MISSING,
                _ => EXIT_RUNTIME,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Missing(p) => write!(f, "missing artifact: {}", p.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tlv_core::Error> for CliError {
    fn from(e: tlv_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// `--out` if given, else `<root>/<name>` where root comes from
/// [`ARTIFACT_ROOT_VAR`] or defaults to `artifacts`.
pub fn artifact_dir(out: Option<&Path>, name: &str) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(ARTIFACT_ROOT_VAR)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("artifacts"));
            root.join(name)
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))
}
