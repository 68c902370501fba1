//! Experiment configuration files (TOML, versioned schema).

use std::path::Path;

use serde::{Deserialize, Serialize};
use tlv_core::analysis::{SweepBase, SweepGrid};
use tlv_core::resampler::Method;
use tlv_core::train::{ModelConfig, SyntheticTask, TrainConfig};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 1000, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub task: SyntheticTask,
    #[serde(default)]
    pub pretrain: Option<TrainConfig>,
    #[serde(default)]
    pub finetune: Option<TrainConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
}

/// Command-line values that replace file values before the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOverrides {
    /// Sets the initialization seed and every stage seed.
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub groups: Option<usize>,
    pub total_queries: Option<usize>,
    /// Steps per epoch for every configured stage.
    pub steps: Option<usize>,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn check_version(v: u32) -> CliResult<()> {
    if v != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        check_version(cfg.schema_version)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn apply(&mut self, o: &TrainOverrides) {
        if let Some(seed) = o.seed {
            self.model.init_seed = seed;
            for stage in [&mut self.pretrain, &mut self.finetune].into_iter().flatten() {
                stage.seed = seed;
            }
        }
        if let Some(m) = o.method {
            self.model.method = m;
        }
        if let Some(g) = o.groups {
            self.model.groups = Some(g);
        }
        if let Some(q) = o.total_queries {
            self.model.total_queries = q;
        }
        if let Some(s) = o.steps {
            for stage in [&mut self.pretrain, &mut self.finetune].into_iter().flatten() {
                stage.steps_per_epoch = s;
            }
        }
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> CliResult<()> {
        check_version(self.schema_version)?;
        if self.pretrain.is_none() && self.finetune.is_none() {
            return Err(CliError::Config("config defines neither [pretrain] nor [finetune]".into()));
        }
        self.model.routing()?;
        self.task.validate()?;
        self.model.check_task(&self.task)?;
        for stage in [&self.pretrain, &self.finetune].into_iter().flatten() {
            stage.validate()?;
        }
        if self.eval.samples == 0 {
            return Err(CliError::Config("eval.samples must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        [&self.pretrain, &self.finetune]
            .into_iter()
            .flatten()
            .map(TrainConfig::total_steps)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub experiment: ExperimentConfig,
    pub grid: SweepGrid,
}

impl SweepConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let grid = value
            .remove("grid")
            .ok_or_else(|| CliError::Config("sweep config needs a [grid] table".into()))?;
        let grid: SweepGrid = grid.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let experiment = ExperimentConfig::parse(&toml::to_string(&value).map_err(|e| CliError::Config(e.to_string()))?)?;
        Ok(Self { experiment, grid })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn base(&self) -> CliResult<SweepBase> {
        let e = &self.experiment;
        let finetune = e
            .finetune
            .clone()
            .ok_or_else(|| CliError::Config("sweep config needs a [finetune] stage".into()))?;
        Ok(SweepBase {
            model: e.model.clone(),
            task: e.task.clone(),
            pretrain: e.pretrain.clone(),
            finetune,
            eval_samples: e.eval.samples,
            eval_seed: e.eval.seed,
        })
    }
}
