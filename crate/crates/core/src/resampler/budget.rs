use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Each frame resampled by its own query slice.
    Image,
    /// All queries over the whole concatenated sequence.
    Naive,
    /// Query groups over aligned contiguous spans.
    Group,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Image, Method::Naive, Method::Group];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Image => "image",
            Method::Naive => "naive",
            Method::Group => "group",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "image" => Ok(Method::Image),
            "naive" => Ok(Method::Naive),
            "group" => Ok(Method::Group),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected image, naive or group)"
            ))),
        }
    }
}

/// Visual tokens handed downstream for one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub frames: usize,
    pub tokens_in: usize,
    pub queries_out_count: usize,
}

/// Image-level output grows with the frame count; both video-level
/// methods emit exactly `total_queries`.
pub fn token_budget(
    method: Method,
    frames: usize,
    tokens_per_frame: usize,
    total_queries: usize,
    per_frame_queries: usize,
) -> TokenBudget {
    let queries_out_count = match method {
        Method::Image => frames * per_frame_queries,
        Method::Naive | Method::Group => total_queries,
    };
    TokenBudget {
        frames,
        tokens_in: frames * tokens_per_frame,
        queries_out_count,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BudgetRow {
    pub frames: usize,
    pub image: usize,
    pub video: usize,
}

/// Image-level vs video-level output counts across frame counts.
pub fn budget_table(frame_counts: &[usize], per_frame_queries: usize, total_queries: usize) -> Vec<BudgetRow> {
    frame_counts
        .iter()
        .map(|&n| BudgetRow {
            frames: n,
            image: token_budget(Method::Image, n, 1, total_queries, per_frame_queries).queries_out_count,
            video: token_budget(Method::Group, n, 1, total_queries, per_frame_queries).queries_out_count,
        })
        .collect()
}
