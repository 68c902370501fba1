//! The three resampling paths over one set of weights.
//!
//! All paths share the input projection, the query bank and the
//! cross-attention stack, so the same [`Resampler`] can be evaluated
//! image-level, naive video-level or grouped. Only the video-level paths
//! apply the position table, after projecting the concatenated sequence
//! and before any split.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::budget::{token_budget, Method, TokenBudget};
use super::plan::GroupPlan;
use super::sequence::FeatureSequence;
use crate::error::{Error, Result};
use crate::numeric::{
    CrossAttention, Graph, LinearLayer, ParamGroup, ParamId, ParamStore, PeKind, PositionEncoding,
    Tensor, Var,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplerConfig {
    pub d_vis: usize,
    pub d_model: usize,
    pub total_queries: usize,
    #[serde(default = "one")]
    pub heads: usize,
    /// Number of stacked cross-attention blocks.
    #[serde(default = "one")]
    pub depth: usize,
    pub pe: PeKind,
    /// Position table length; must cover the longest concatenated sequence.
    pub max_len: usize,
    #[serde(default)]
    pub identity_projections: bool,
}

fn one() -> usize {
    1
}

/// Learnable query matrix `[total, d_model]`.
#[derive(Debug, Clone)]
pub struct QueryBank {
    pub param: ParamId,
    total: usize,
    dim: usize,
}

impl QueryBank {
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// One query range and the token range it may attend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub queries: Range<usize>,
    pub tokens: Range<usize>,
}

/// Graph-level result of a resample.
#[derive(Debug)]
pub struct ResampleTrace {
    pub queries_out: Var,
    /// Full `[total_queries, L]` head-mean attention of the last block;
    /// zero outside `blocks`.
    pub attention: Tensor,
    pub head_attention: Vec<Tensor>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct ResampledOutput {
    pub queries_out: Tensor,
    pub attention: Option<Tensor>,
    pub head_attention: Vec<Tensor>,
    pub blocks: Vec<Block>,
    pub tokens_per_frame: usize,
    pub budget: TokenBudget,
}

impl ResampledOutput {
    /// Frees the attention maps; later exports report them unavailable.
    pub fn drop_attention(&mut self) {
        self.attention = None;
        self.head_attention.clear();
    }
}

/// The method a model runs with, with its per-method parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Routing {
    Image { per_frame_queries: usize },
    Naive,
    Group(GroupPlan),
}

impl Routing {
    pub fn method(&self) -> Method {
        match self {
            Routing::Image { .. } => Method::Image,
            Routing::Naive => Method::Naive,
            Routing::Group(_) => Method::Group,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Resampler {
    proj: LinearLayer,
    bank: QueryBank,
    layers: Vec<CrossAttention>,
    pe: PositionEncoding,
    config: ResamplerConfig,
}

impl Resampler {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        config: ResamplerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let group = ParamGroup::Resampler;
        if config.total_queries == 0 || config.depth == 0 || config.d_model == 0 {
            return Err(Error::Config(
                "resampler needs at least one query, one block and positive width".into(),
            ));
        }
        if config.identity_projections && config.d_vis != config.d_model {
            return Err(Error::Config(format!(
                "identity projections need d_vis == d_model, got {} and {}",
                config.d_vis, config.d_model
            )));
        }
        let proj = if config.identity_projections {
            LinearLayer::identity(store, &format!("{name}.proj"), config.d_model, group)?
        } else {
            LinearLayer::new(store, &format!("{name}.proj"), config.d_vis, config.d_model, group, rng)?
        };
        let queries = store.register_uniform(
            &format!("{name}.queries"),
            &[config.total_queries, config.d_model],
            config.d_model,
            group,
            rng,
        )?;
        let layers = (0..config.depth)
            .map(|i| {
                CrossAttention::new(
                    store,
                    &format!("{name}.attn{i}"),
                    config.d_model,
                    config.heads,
                    config.identity_projections,
                    group,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let pe = PositionEncoding::new(
            store,
            &format!("{name}.pe"),
            config.pe,
            config.max_len,
            config.d_model,
            group,
        )?;
        Ok(Self {
            proj,
            bank: QueryBank {
                param: queries,
                total: config.total_queries,
                dim: config.d_model,
            },
            layers,
            pe,
            config,
        })
    }

    pub fn config(&self) -> &ResamplerConfig {
        &self.config
    }

    pub fn bank(&self) -> &QueryBank {
        &self.bank
    }

    pub fn projection(&self) -> &LinearLayer {
        &self.proj
    }

    pub fn position_encoding(&self) -> &PositionEncoding {
        &self.pe
    }

    /// `Linear(Concat(H₁..H_N))` over an already concatenated `[L, d_vis]`.
    pub fn project(&self, g: &mut Graph<'_>, seq: Var) -> Result<Var> {
        if g.shape(seq)[1] != self.proj.d_in() {
            return Err(Error::Config(format!(
                "resampler projects width {}, sequence has width {}",
                self.proj.d_in(),
                g.shape(seq)[1]
            )));
        }
        self.proj.forward(g, seq)
    }

    /// Runs `queries` through every block against `kv`; returns the output
    /// and the last block's weights.
    fn attend_stack(&self, g: &mut Graph<'_>, queries: Var, kv: Var) -> Result<(Var, Tensor, Vec<Tensor>)> {
        let mut q = queries;
        let mut last = None;
        for layer in &self.layers {
            let att = layer.forward(g, q, kv, kv)?;
            q = att.out;
            last = Some((att.weights, att.head_weights));
        }
        let (w, hw) = last.expect("depth >= 1");
        Ok((q, w, hw))
    }

    fn assemble(
        &self,
        g: &mut Graph<'_>,
        seq_len: usize,
        pieces: Vec<(Block, Var, Tensor, Vec<Tensor>)>,
    ) -> Result<ResampleTrace> {
        let total = self.bank.total;
        let heads = self.config.heads;
        let mut attention = Tensor::zeros(&[total, seq_len]);
        let mut head_attention = vec![Tensor::zeros(&[total, seq_len]); heads];
        let mut outs = Vec::with_capacity(pieces.len());
        let mut blocks = Vec::with_capacity(pieces.len());
        for (block, out, w, hw) in pieces {
            for (qi, q) in block.queries.clone().enumerate() {
                for (ti, t) in block.tokens.clone().enumerate() {
                    attention.set(q, t, w.get(qi, ti));
                    for (h, hwt) in hw.iter().enumerate() {
                        head_attention[h].set(q, t, hwt.get(qi, ti));
                    }
                }
            }
            outs.push(out);
            blocks.push(block);
        }
        let queries_out = g.concat_rows(&outs)?;
        Ok(ResampleTrace {
            queries_out,
            attention,
            head_attention,
            blocks,
        })
    }

    /// Image-level: frame `i` is projected on its own and attended by query
    /// slice `i`; slices are concatenated in frame order. No position table.
    pub fn image_level(
        &self,
        g: &mut Graph<'_>,
        seq: Var,
        frames: usize,
        per_frame_queries: usize,
    ) -> Result<ResampleTrace> {
        let len = g.shape(seq)[0];
        if frames == 0 || !len.is_multiple_of(frames) {
            return Err(Error::Plan(format!(
                "{len} tokens do not split into {frames} frames"
            )));
        }
        if self.bank.total != frames * per_frame_queries {
            return Err(Error::Plan(format!(
                "image-level needs {frames} x {per_frame_queries} = {} queries, bank has {}",
                frames * per_frame_queries,
                self.bank.total
            )));
        }
        let t = len / frames;
        let bank = g.param(self.bank.param);
        let mut pieces = Vec::with_capacity(frames);
        for i in 0..frames {
            let frame = g.slice_rows(seq, i * t, (i + 1) * t)?;
            let projected = self.project(g, frame)?;
            let q = g.slice_rows(bank, i * per_frame_queries, (i + 1) * per_frame_queries)?;
            let (out, w, hw) = self.attend_stack(g, q, projected)?;
            let block = Block {
                queries: i * per_frame_queries..(i + 1) * per_frame_queries,
                tokens: i * t..(i + 1) * t,
            };
            pieces.push((block, out, w, hw));
        }
        self.assemble(g, len, pieces)
    }

    /// Naive video-level: every query attends the whole position-encoded
    /// sequence.
    pub fn naive_video(&self, g: &mut Graph<'_>, seq: Var) -> Result<ResampleTrace> {
        let len = g.shape(seq)[0];
        self.pe.check_len(len)?;
        let projected = self.project(g, seq)?;
        let h = self.pe.apply(g, projected)?;
        let q = g.param(self.bank.param);
        let (out, w, hw) = self.attend_stack(g, q, h)?;
        let block = Block {
            queries: 0..self.bank.total,
            tokens: 0..len,
        };
        self.assemble(g, len, vec![(block, out, w, hw)])
    }

    /// Video-level group: split the position-encoded sequence and the
    /// query bank into aligned groups; group `i` attends span `i` only.
    pub fn group(&self, g: &mut Graph<'_>, seq: Var, plan: &GroupPlan) -> Result<ResampleTrace> {
        let len = g.shape(seq)[0];
        if plan.seq_len() != len || plan.total_queries() != self.bank.total {
            return Err(Error::Plan(format!(
                "plan covers {} tokens and {} queries, input has {len} tokens and bank {} queries",
                plan.seq_len(),
                plan.total_queries(),
                self.bank.total
            )));
        }
        self.pe.check_len(len)?;
        let projected = self.project(g, seq)?;
        let h = self.pe.apply(g, projected)?;
        let bank = g.param(self.bank.param);
        let mut pieces = Vec::with_capacity(plan.groups());
        for i in 0..plan.groups() {
            let (qr, span) = (plan.query_range(i), plan.span(i));
            let hs = g.slice_rows(h, span.start, span.end)?;
            let q = g.slice_rows(bank, qr.start, qr.end)?;
            let (out, w, hw) = self.attend_stack(g, q, hs)?;
            pieces.push((Block { queries: qr, tokens: span }, out, w, hw));
        }
        self.assemble(g, len, pieces)
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        seq: Var,
        frames: usize,
        routing: &Routing,
    ) -> Result<ResampleTrace> {
        match routing {
            Routing::Image { per_frame_queries } => self.image_level(g, seq, frames, *per_frame_queries),
            Routing::Naive => self.naive_video(g, seq),
            Routing::Group(plan) => self.group(g, seq, plan),
        }
    }

    /// Value-level resample of one sequence.
    pub fn resample(
        &self,
        store: &ParamStore,
        seq: &FeatureSequence,
        routing: &Routing,
    ) -> Result<ResampledOutput> {
        let mut g = Graph::new(store);
        let input = g.constant(seq.concat())?;
        let trace = self.forward(&mut g, input, seq.frames(), routing)?;
        let per_frame = match routing {
            Routing::Image { per_frame_queries } => *per_frame_queries,
            _ => 0,
        };
        let budget = token_budget(
            routing.method(),
            seq.frames(),
            seq.tokens_per_frame(),
            self.bank.total,
            per_frame,
        );
        let queries_out = g.value(trace.queries_out).clone();
        debug_assert_eq!(queries_out.rows(), budget.queries_out_count);
        Ok(ResampledOutput {
            queries_out,
            attention: Some(trace.attention),
            head_attention: trace.head_attention,
            blocks: trace.blocks,
            tokens_per_frame: seq.tokens_per_frame(),
            budget,
        })
    }

    pub fn image_level_resample(
        &self,
        store: &ParamStore,
        seq: &FeatureSequence,
        per_frame_queries: usize,
    ) -> Result<ResampledOutput> {
        self.resample(store, seq, &Routing::Image { per_frame_queries })
    }

    pub fn naive_video_resample(&self, store: &ParamStore, seq: &FeatureSequence) -> Result<ResampledOutput> {
        self.resample(store, seq, &Routing::Naive)
    }

    pub fn group_resample(
        &self,
        store: &ParamStore,
        seq: &FeatureSequence,
        plan: &GroupPlan,
    ) -> Result<ResampledOutput> {
        self.resample(store, seq, &Routing::Group(plan.clone()))
    }

    /// Resamples independent sequences in parallel; results keep input order.
    pub fn resample_batch(
        &self,
        store: &ParamStore,
        seqs: &[FeatureSequence],
        routing: &Routing,
    ) -> Vec<Result<ResampledOutput>> {
        seqs.par_iter()
            .map(|s| self.resample(store, s, routing))
            .collect()
    }
}
