//! Staged training with explicit freeze plans.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::{evaluate, ToyModel};
use super::optim::{Adam, AdamConfig};
use super::schedule::WarmupCosine;
use super::task::SyntheticTask;
use crate::error::{Error, Result};
use crate::numeric::ParamGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        })
    }
}

/// Which parameter groups a stage updates. The encoder is never among them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreezePlan {
    pub stage: Stage,
}

impl FreezePlan {
    pub fn for_stage(stage: Stage) -> Self {
        Self { stage }
    }

    pub fn trains(&self, group: ParamGroup) -> bool {
        match (self.stage, group) {
            (_, ParamGroup::Encoder) => false,
            (_, ParamGroup::Resampler) => true,
            (Stage::Pretrain, ParamGroup::Head) => false,
            (Stage::Finetune, ParamGroup::Head) => true,
        }
    }

    /// Sets trainability on every parameter, then checks the store agrees.
    pub fn apply(&self, model: &mut ToyModel) -> Result<()> {
        let ids: Vec<_> = model.store.ids().collect();
        for &id in &ids {
            let p = model.store.get(id);
            if p.group == ParamGroup::Encoder && !p.permanently_frozen {
                return Err(Error::Config(format!(
                    "encoder parameter {:?} is not marked frozen",
                    p.name
                )));
            }
            let want = self.trains(p.group);
            model.store.set_trainable(id, want);
            if model.store.is_trainable(id) != want {
                return Err(Error::Config(format!(
                    "{} plan wants {:?} trainable={want}, store disagrees",
                    self.stage,
                    model.store.get(id).name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_ratio: f64,
    #[serde(default = "one")]
    pub epochs: usize,
    /// Distinct batches per epoch; later epochs revisit the same batches.
    pub steps_per_epoch: usize,
    pub seed: u64,
    #[serde(default = "default_eval")]
    pub eval_samples: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn default_warmup() -> f64 {
    0.03
}

fn one() -> usize {
    1
}

fn default_eval() -> usize {
    256
}

impl TrainConfig {
    /// Desk defaults: batch 32 for pretraining, 16 for fine-tuning.
    pub fn desk(stage: Stage, steps: usize, seed: u64) -> Self {
        let (batch_size, lr) = match stage {
            Stage::Pretrain => (32, 1e-2),
            Stage::Finetune => (16, 2e-3),
        };
        Self {
            batch_size,
            lr,
            warmup_ratio: 0.03,
            epochs: 1,
            steps_per_epoch: steps,
            seed,
            eval_samples: 256,
            adam: AdamConfig::default(),
        }
    }

    /// Published learning rates: 1e-4 for pretraining, 2e-5 for fine-tuning.
    pub fn published(stage: Stage, steps: usize, seed: u64) -> Self {
        let mut cfg = Self::desk(stage, steps, seed);
        cfg.lr = match stage {
            Stage::Pretrain => 1e-4,
            Stage::Finetune => 2e-5,
        };
        cfg
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps_per_epoch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size, epochs and steps must be positive".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::Config("eval_samples must be positive".into()));
        }
        WarmupCosine::new(self.lr, self.warmup_ratio, self.total_steps()).map(|_| ())
    }
}

fn mix(seed: u64, stage: Stage, index: u64) -> u64 {
    let tag = match stage {
        Stage::Pretrain => 0x5052_4554,
        Stage::Finetune => 0x4649_4e45,
    };
    let mut z = seed ^ (tag << 32) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the held-out evaluation set for a stage.
pub fn eval_seed(cfg: &TrainConfig, stage: Stage) -> u64 {
    mix(cfg.seed, stage, u64::MAX)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingReport {
    pub stage: Stage,
    pub steps: usize,
    pub warmup_steps: usize,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub eval_loss_before: f64,
    pub eval_loss_after: f64,
    pub accuracy: f64,
    pub digests_before: BTreeMap<ParamGroup, String>,
    pub digests_after: BTreeMap<ParamGroup, String>,
}

impl TrainingReport {
    pub fn changed(&self, group: ParamGroup) -> bool {
        self.digests_before.get(&group) != self.digests_after.get(&group)
    }
}

fn digests(model: &ToyModel) -> BTreeMap<ParamGroup, String> {
    [ParamGroup::Encoder, ParamGroup::Resampler, ParamGroup::Head]
        .into_iter()
        .map(|g| (g, model.store.group_digest(g)))
        .collect()
}

/// Runs one stage in place. A non-finite loss aborts with
/// [`Error::Diverged`] and restores the parameters held at stage start.
pub fn run_stage(
    model: &mut ToyModel,
    plan: FreezePlan,
    cfg: &TrainConfig,
    task: &SyntheticTask,
) -> Result<TrainingReport> {
    cfg.validate()?;
    task.validate()?;
    model.config().check_task(task)?;
    plan.apply(model)?;
    let stage = plan.stage;
    let schedule = WarmupCosine::new(cfg.lr, cfg.warmup_ratio, cfg.total_steps())?;
    let eval = task.generate(cfg.eval_samples, eval_seed(cfg, stage))?;
    let eval_loss_before = model.loss(&eval.sequences, &eval.labels)?;
    let digests_before = digests(model);
    let snapshot = model.store.clone();
    let mut adam = Adam::new(cfg.adam);
    let mut losses = Vec::with_capacity(cfg.total_steps());
    let mut lrs = Vec::with_capacity(cfg.total_steps());

    for step in 0..cfg.total_steps() {
        let batch_index = (step % cfg.steps_per_epoch) as u64;
        let batch = task.generate(cfg.batch_size, mix(cfg.seed, stage, batch_index))?;
        let result = model.loss_and_grads(&batch.sequences, &batch.labels);
        let (loss, grads) = match result {
            Ok((loss, _)) if !loss.is_finite() => Err(loss),
            Ok(v) => Ok(v),
            Err(Error::NonFinite(_)) => Err(f64::NAN),
            Err(e) => return Err(e),
        }
        .map_err(|loss| {
            model.store = snapshot.clone();
            Error::Diverged { step, loss }
        })?;
        model.store.zero_grads();
        for g in grads {
            g.accumulate_into(&mut model.store);
        }
        let lr = schedule.lr(step);
        adam.step(&mut model.store, lr);
        let diverged = model
            .store
            .iter()
            .any(|(_, p)| !p.value.is_finite());
        if diverged {
            model.store = snapshot;
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
        losses.push(loss);
        lrs.push(lr);
    }

    model.mark_trained(cfg.total_steps());
    let eval_loss_after = model.loss(&eval.sequences, &eval.labels)?;
    let accuracy = evaluate(model, task, cfg.eval_samples, eval_seed(cfg, stage))?;
    Ok(TrainingReport {
        stage,
        steps: cfg.total_steps(),
        warmup_steps: schedule.warmup(),
        losses,
        lrs,
        eval_loss_before,
        eval_loss_after,
        accuracy,
        digests_before,
        digests_after: digests(model),
    })
}
