mod model;
mod optim;
mod schedule;
mod stage;
mod task;

pub use model::{evaluate, Classifier, ModelConfig, ToyModel, CHUNK};
pub use optim::{Adam, AdamConfig};
pub use schedule::{warmup_steps, WarmupCosine};
pub use stage::{eval_seed, run_stage, FreezePlan, Stage, TrainConfig, TrainingReport};
pub use task::{Batch, Placement, SyntheticTask, TaskKind};
