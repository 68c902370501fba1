//! Run manifests: what ran, with which resolved inputs, producing what.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tlv_core::analysis::Selection;

use crate::config::{ExperimentConfig, SweepConfig};
use crate::{write_file, CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A replayable command with all inputs resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Train {
        config: ExperimentConfig,
    },
    Sweep {
        config: SweepConfig,
    },
    Probe {
        run: PathBuf,
        fractions: Vec<f64>,
        selection: Selection,
        seeds: Vec<u64>,
        samples: usize,
    },
    Heatmap {
        run: PathBuf,
        clip_seed: u64,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Train { .. } => "train",
            Invocation::Sweep { .. } => "sweep",
            Invocation::Probe { .. } => "probe",
            Invocation::Heatmap { .. } => "heatmap",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Train { config } => Some(config.model.init_seed),
            Invocation::Sweep { config } => Some(config.experiment.model.init_seed),
            Invocation::Probe { seeds, .. } => seeds.first().copied(),
            Invocation::Heatmap { clip_seed, .. } => Some(*clip_seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    #[serde(flatten)]
    pub invocation: Invocation,
    pub seed: Option<u64>,
    /// Artifact name to file name, relative to the manifest's directory.
    pub artifacts: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Manifest {
    pub fn begin(invocation: Invocation) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: invocation.seed(),
            invocation,
            artifacts: BTreeMap::new(),
            started_unix: now(),
            finished_unix: None,
            status: RunStatus::Running,
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join(MANIFEST_FILE), json + "\n")
    }

    pub fn finish(&mut self, dir: &Path, error: Option<String>) -> CliResult<()> {
        self.finished_unix = Some(now());
        self.status = if error.is_some() { RunStatus::Failed } else { RunStatus::Ok };
        self.error = error;
        self.write(dir)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::Missing(path.to_path_buf()))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}
