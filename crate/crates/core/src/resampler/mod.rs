//! Learnable-query resampling of per-frame visual features.

mod budget;
mod core;
mod plan;
mod sequence;

pub use self::budget::{budget_table, token_budget, BudgetRow, Method, TokenBudget};
pub use self::core::{
    Block, QueryBank, ResampleTrace, ResampledOutput, Resampler, ResamplerConfig, Routing,
};
pub use self::plan::GroupPlan;
pub use self::sequence::FeatureSequence;
