//! Frozen encoder, resampler and pooled linear head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::task::SyntheticTask;
use crate::error::{Error, Result};
use crate::numeric::{Gradients, Graph, LinearLayer, ParamGroup, ParamStore, PeKind, Var};
use crate::resampler::{
    FeatureSequence, GroupPlan, Method, ResampledOutput, Resampler, ResamplerConfig, Routing,
};

/// Sequences per graph when a batch is split across threads. Gradient
/// sums are independent of the thread count.
pub const CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub method: Method,
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub d_raw: usize,
    pub d_vis: usize,
    pub d_model: usize,
    pub total_queries: usize,
    /// Group count for the group method; defaults to one group per frame.
    #[serde(default)]
    pub groups: Option<usize>,
    #[serde(default)]
    pub frame_aligned: bool,
    #[serde(default = "one")]
    pub heads: usize,
    #[serde(default = "one")]
    pub depth: usize,
    pub pe: PeKind,
    pub classes: usize,
    pub init_seed: u64,
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn seq_len(&self) -> usize {
        self.frames * self.tokens_per_frame
    }

    pub fn routing(&self) -> Result<Routing> {
        let (n, q) = (self.frames, self.total_queries);
        match self.method {
            Method::Naive => Ok(Routing::Naive),
            Method::Image => {
                if n == 0 || q % n != 0 {
                    return Err(Error::Plan(format!(
                        "image-level resampling needs total_queries ({q}) divisible by frames ({n})"
                    )));
                }
                Ok(Routing::Image { per_frame_queries: q / n })
            }
            Method::Group => {
                let groups = self.groups.unwrap_or(n);
                let plan = if self.frame_aligned {
                    GroupPlan::frame_aligned(groups, q, n, self.tokens_per_frame)?
                } else {
                    GroupPlan::new(groups, q, self.seq_len())?
                };
                Ok(Routing::Group(plan))
            }
        }
    }

    /// Task shape must match the model's input shape.
    pub fn check_task(&self, task: &SyntheticTask) -> Result<()> {
        if task.frames != self.frames
            || task.tokens_per_frame != self.tokens_per_frame
            || task.dim != self.d_raw
            || task.classes() != self.classes
        {
            return Err(Error::Config(format!(
                "task ({} frames x {} tokens x {}, {} classes) does not fit model ({} x {} x {}, {} classes)",
                task.frames,
                task.tokens_per_frame,
                task.dim,
                task.classes(),
                self.frames,
                self.tokens_per_frame,
                self.d_raw,
                self.classes
            )));
        }
        Ok(())
    }
}

/// Anything that maps clips to class indices.
pub trait Classifier {
    fn predict(&self, seqs: &[FeatureSequence]) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ModelConfig,
    routing: Routing,
    pub store: ParamStore,
    encoder: LinearLayer,
    resampler: Resampler,
    head: LinearLayer,
    trained_steps: usize,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl ToyModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        if config.classes < 2 {
            return Err(Error::Config("model needs at least 2 classes".into()));
        }
        let routing = config.routing()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let encoder = LinearLayer::new(
            &mut store,
            "encoder",
            config.d_raw,
            config.d_vis,
            ParamGroup::Encoder,
            &mut rng,
        )?;
        for id in encoder.params() {
            store.freeze_permanently(id);
        }
        let resampler = Resampler::new(
            &mut store,
            "resampler",
            ResamplerConfig {
                d_vis: config.d_vis,
                d_model: config.d_model,
                total_queries: config.total_queries,
                heads: config.heads,
                depth: config.depth,
                pe: config.pe,
                max_len: config.seq_len(),
                identity_projections: false,
            },
            &mut rng,
        )?;
        let head = LinearLayer::new(
            &mut store,
            "head",
            config.d_model,
            config.classes,
            ParamGroup::Head,
            &mut rng,
        )?;
        Ok(Self {
            config,
            routing,
            store,
            encoder,
            resampler,
            head,
            trained_steps: 0,
        })
    }

    /// Optimizer steps applied so far, across stages.
    pub fn trained_steps(&self) -> usize {
        self.trained_steps
    }

    /// Records steps applied outside this process, e.g. before a checkpoint.
    pub fn mark_trained(&mut self, steps: usize) {
        self.trained_steps += steps;
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn routing(&self) -> &Routing {
        &self.routing
    }

    pub fn resampler(&self) -> &Resampler {
        &self.resampler
    }

    fn check_input(&self, seq: &FeatureSequence) -> Result<()> {
        let c = &self.config;
        if seq.frames() != c.frames || seq.tokens_per_frame() != c.tokens_per_frame || seq.dim() != c.d_raw {
            return Err(Error::Dimension(format!(
                "clip {}x{}x{} does not match model input {}x{}x{}",
                seq.frames(),
                seq.tokens_per_frame(),
                seq.dim(),
                c.frames,
                c.tokens_per_frame,
                c.d_raw
            )));
        }
        Ok(())
    }

    /// Logits `[seqs.len(), classes]`. `mask` multiplies rows of the
    /// resampled queries before pooling.
    pub fn logits(&self, g: &mut Graph<'_>, seqs: &[FeatureSequence], mask: Option<&[f64]>) -> Result<Var> {
        if let Some(m) = mask {
            if m.len() != self.config.total_queries {
                return Err(Error::Dimension(format!(
                    "query mask has {} entries for {} queries",
                    m.len(),
                    self.config.total_queries
                )));
            }
        }
        let mut pooled = Vec::with_capacity(seqs.len());
        for seq in seqs {
            self.check_input(seq)?;
            let x = g.constant(seq.concat())?;
            let e = self.encoder.forward(g, x)?;
            let trace = self.resampler.forward(g, e, seq.frames(), &self.routing)?;
            let mut q = trace.queries_out;
            if let Some(m) = mask {
                q = g.mask_rows(q, m.to_vec())?;
            }
            pooled.push(g.mean_rows(q)?);
        }
        let stacked = g.concat_rows(&pooled)?;
        self.head.forward(g, stacked)
    }

    /// Mean cross-entropy and gradients over a batch, computed in fixed
    /// chunks in parallel and summed in chunk order.
    pub fn loss_and_grads(&self, seqs: &[FeatureSequence], labels: &[usize]) -> Result<(f64, Vec<Gradients>)> {
        if seqs.len() != labels.len() || seqs.is_empty() {
            return Err(Error::Argument(format!(
                "{} clips with {} labels",
                seqs.len(),
                labels.len()
            )));
        }
        let total = seqs.len() as f64;
        let parts: Vec<Result<(f64, Gradients)>> = seqs
            .par_chunks(CHUNK)
            .zip(labels.par_chunks(CHUNK))
            .map(|(s, l)| {
                let mut g = Graph::new(&self.store);
                let logits = self.logits(&mut g, s, None)?;
                let ce = g.cross_entropy(logits, l)?;
                let weighted = g.scale(ce, s.len() as f64 / total)?;
                let loss = g.value(weighted).data()[0];
                Ok((loss, g.backward(weighted)?))
            })
            .collect();
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(parts.len());
        for part in parts {
            let (l, gr) = part?;
            loss += l;
            grads.push(gr);
        }
        Ok((loss, grads))
    }

    pub fn loss(&self, seqs: &[FeatureSequence], labels: &[usize]) -> Result<f64> {
        if seqs.len() != labels.len() || seqs.is_empty() {
            return Err(Error::Argument(format!(
                "{} clips with {} labels",
                seqs.len(),
                labels.len()
            )));
        }
        let total = seqs.len() as f64;
        let parts: Vec<Result<f64>> = seqs
            .par_chunks(CHUNK)
            .zip(labels.par_chunks(CHUNK))
            .map(|(s, l)| {
                let mut g = Graph::new(&self.store);
                let logits = self.logits(&mut g, s, None)?;
                let ce = g.cross_entropy(logits, l)?;
                Ok(g.value(ce).data()[0] * s.len() as f64 / total)
            })
            .collect();
        parts.into_iter().sum()
    }

    pub fn predict_masked(&self, seqs: &[FeatureSequence], mask: Option<&[f64]>) -> Result<Vec<usize>> {
        let parts: Vec<Result<Vec<usize>>> = seqs
            .par_chunks(CHUNK)
            .map(|s| {
                let mut g = Graph::new(&self.store);
                let logits = self.logits(&mut g, s, mask)?;
                let t = g.value(logits);
                Ok(t.data().chunks(t.cols()).map(argmax).collect())
            })
            .collect();
        let mut out = Vec::with_capacity(seqs.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Encoder output for one clip.
    pub fn encode(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        self.check_input(seq)?;
        let mut g = Graph::new(&self.store);
        let x = g.constant(seq.concat())?;
        let e = self.encoder.forward(&mut g, x)?;
        let value = g.value(e).clone();
        let frames: Vec<_> = (0..seq.frames())
            .map(|i| value.slice_rows(i * seq.tokens_per_frame(), (i + 1) * seq.tokens_per_frame()))
            .collect();
        FeatureSequence::from_frames(&frames)
    }

    /// Resampler output, with attention maps, for one clip.
    pub fn resample(&self, seq: &FeatureSequence) -> Result<ResampledOutput> {
        let encoded = self.encode(seq)?;
        self.resampler.resample(&self.store, &encoded, &self.routing)
    }
}

impl Classifier for ToyModel {
    fn predict(&self, seqs: &[FeatureSequence]) -> Result<Vec<usize>> {
        self.predict_masked(seqs, None)
    }
}

/// Fraction of `samples` fresh clips classified correctly.
pub fn evaluate<C: Classifier + ?Sized>(
    model: &C,
    task: &SyntheticTask,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Argument("evaluation needs at least one sample".into()));
    }
    let batch = task.generate(samples, seed)?;
    let predicted = model.predict(&batch.sequences)?;
    let correct = predicted.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / samples as f64)
}
