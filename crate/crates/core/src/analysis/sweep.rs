//! Group-setting sweeps: one independent training run per grid point.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resampler::{token_budget, GroupPlan, Method};
use crate::train::{evaluate, run_stage, FreezePlan, ModelConfig, Stage, SyntheticTask, ToyModel, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub frames: Vec<usize>,
    pub total_queries: Vec<usize>,
    /// Group counts to try.
    #[serde(default)]
    pub groups: Vec<usize>,
    /// Queries-per-group values to try; each implies `groups = Q / value`.
    #[serde(default)]
    pub queries_per_group: Vec<usize>,
}

/// Shared settings for every point. `frames`, `total_queries` and
/// `groups` are overwritten per point; the method is always group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBase {
    pub model: ModelConfig,
    pub task: SyntheticTask,
    #[serde(default)]
    pub pretrain: Option<TrainConfig>,
    pub finetune: TrainConfig,
    pub eval_samples: usize,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub frames: usize,
    pub total_queries: usize,
    pub groups: usize,
    pub queries_per_group: Option<usize>,
    pub status: PointStatus,
    pub accuracy: Option<f64>,
    pub token_budget: usize,
    pub wall_time_s: f64,
    pub note: String,
}

pub const SWEEP_HEADER: &str = "frames,q_total,groups,queries_per_group,status,accuracy,token_budget,wall_time_s,note";

impl SweepGrid {
    /// Distinct `(N, Q, M)` points in grid order. A queries-per-group value
    /// that does not divide Q yields a point with no group count.
    fn points(&self) -> Vec<(usize, usize, Option<usize>, Option<usize>)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &n in &self.frames {
            for &q in &self.total_queries {
                for &m in &self.groups {
                    if seen.insert((n, q, Some(m))) {
                        out.push((n, q, Some(m), None));
                    }
                }
                for &per in &self.queries_per_group {
                    let m = (per > 0 && q % per == 0).then(|| q / per);
                    if m.is_none() || seen.insert((n, q, m)) {
                        out.push((n, q, m, Some(per)));
                    }
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
            || self.total_queries.is_empty()
            || (self.groups.is_empty() && self.queries_per_group.is_empty())
    }
}

fn run_point(base: &SweepBase, n: usize, q: usize, m: Option<usize>, per: Option<usize>) -> SweepRow {
    let t = base.model.tokens_per_frame;
    let budget = token_budget(Method::Group, n, t, q, 0).queries_out_count;
    let mut row = SweepRow {
        frames: n,
        total_queries: q,
        groups: m.unwrap_or(0),
        queries_per_group: None,
        status: PointStatus::Skipped,
        accuracy: None,
        token_budget: budget,
        wall_time_s: 0.0,
        note: String::new(),
    };
    let Some(m) = m else {
        row.note = format!("skipped: {q} queries do not split into groups of {}", per.unwrap_or(0));
        return row;
    };
    let plan = if base.model.frame_aligned {
        GroupPlan::frame_aligned(m, q, n, t)
    } else {
        GroupPlan::new(m, q, n * t)
    };
    if let Err(e) = plan {
        row.note = format!("skipped: {e}");
        return row;
    }
    row.queries_per_group = Some(q / m);
    let mut notes = Vec::new();
    if m == n {
        notes.push("image-equivalent".to_string());
    }
    let start = Instant::now();
    let result = (|| -> Result<f64> {
        let mut cfg = base.model.clone();
        cfg.method = Method::Group;
        cfg.frames = n;
        cfg.total_queries = q;
        cfg.groups = Some(m);
        let mut task = base.task.clone();
        task.frames = n;
        let mut model = ToyModel::new(cfg)?;
        if let Some(pre) = &base.pretrain {
            run_stage(&mut model, FreezePlan::for_stage(Stage::Pretrain), pre, &task)?;
        }
        run_stage(&mut model, FreezePlan::for_stage(Stage::Finetune), &base.finetune, &task)?;
        evaluate(&model, &task, base.eval_samples, base.eval_seed)
    })();
    row.wall_time_s = start.elapsed().as_secs_f64();
    match result {
        Ok(acc) => {
            row.status = PointStatus::Ok;
            row.accuracy = Some(acc);
        }
        Err(e) => {
            row.status = PointStatus::Failed;
            notes.push(format!("failed: {e}"));
        }
    }
    row.note = notes.join("; ");
    row
}

/// Runs every grid point in parallel. Rows keep grid order; per-point
/// failures are recorded in the row and do not stop the sweep.
pub fn run_sweep(grid: &SweepGrid, base: &SweepBase) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Argument("sweep grid has no points".into()));
    }
    Ok(grid
        .points()
        .into_par_iter()
        .map(|(n, q, m, per)| run_point(base, n, q, m, per))
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let status = match r.status {
            PointStatus::Ok => "ok",
            PointStatus::Skipped => "skipped",
            PointStatus::Failed => "failed",
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.frames,
            r.total_queries,
            r.groups,
            r.queries_per_group.map(|v| v.to_string()).unwrap_or_default(),
            status,
            r.accuracy.map(|v| v.to_string()).unwrap_or_default(),
            r.token_budget,
            r.wall_time_s,
            csv_field(&r.note)
        ));
    }
    s
}
