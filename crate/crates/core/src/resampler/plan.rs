use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Even split of `total_queries` queries and an `L`-token sequence into
/// `groups` contiguous, aligned pieces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    groups: usize,
    total_queries: usize,
    seq_len: usize,
}

impl GroupPlan {
    pub fn new(groups: usize, total_queries: usize, seq_len: usize) -> Result<Self> {
        if groups == 0 || total_queries == 0 || seq_len == 0 {
            return Err(Error::Plan(format!(
                "groups ({groups}), queries ({total_queries}) and sequence length ({seq_len}) must be positive"
            )));
        }
        if !total_queries.is_multiple_of(groups) {
            return Err(Error::Plan(format!(
                "{total_queries} queries do not divide into {groups} groups"
            )));
        }
        if !seq_len.is_multiple_of(groups) {
            return Err(Error::Plan(format!(
                "sequence length {seq_len} does not divide into {groups} groups"
            )));
        }
        Ok(Self {
            groups,
            total_queries,
            seq_len,
        })
    }

    /// Like [`GroupPlan::new`], additionally requiring every span to start
    /// and end on a frame boundary.
    pub fn frame_aligned(
        groups: usize,
        total_queries: usize,
        frames: usize,
        tokens_per_frame: usize,
    ) -> Result<Self> {
        let plan = Self::new(groups, total_queries, frames * tokens_per_frame)?;
        if !frames.is_multiple_of(groups) {
            return Err(Error::Plan(format!(
                "{frames} frames do not divide into {groups} frame-aligned groups"
            )));
        }
        Ok(plan)
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn total_queries(&self) -> usize {
        self.total_queries
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn queries_per_group(&self) -> usize {
        self.total_queries / self.groups
    }

    pub fn span_per_group(&self) -> usize {
        self.seq_len / self.groups
    }

    pub fn query_range(&self, group: usize) -> Range<usize> {
        let q = self.queries_per_group();
        group * q..(group + 1) * q
    }

    pub fn span(&self, group: usize) -> Range<usize> {
        let s = self.span_per_group();
        group * s..(group + 1) * s
    }

    pub fn spans(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.groups).map(|i| self.span(i))
    }
}
