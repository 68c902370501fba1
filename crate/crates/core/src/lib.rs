//! Visual-token resampling for video over a shared learnable query bank,
//! with the training and analysis tooling around it.

pub mod error;
pub mod numeric;

pub use error::{Error, Result};
pub mod resampler;
pub mod ingest;
pub mod train;
pub mod analysis;
