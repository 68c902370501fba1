//! Scaled dot-product cross-attention.

use rand::Rng;

use super::graph::{Graph, Var};
use super::linear::LinearLayer;
use super::params::{ParamGroup, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Projection {
    Identity,
    Linear(LinearLayer),
}

impl Projection {
    fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        match self {
            Projection::Identity => Ok(x),
            Projection::Linear(lin) => lin.forward(g, x),
        }
    }

    fn params(&self) -> Vec<ParamId> {
        match self {
            Projection::Identity => Vec::new(),
            Projection::Linear(lin) => lin.params().to_vec(),
        }
    }
}

/// Result of one attention call: the output rows and the retained weights.
#[derive(Debug)]
pub struct Attended {
    pub out: Var,
    /// Head-averaged `[nq, nk]` weights.
    pub weights: Tensor,
    pub head_weights: Vec<Tensor>,
}

/// Multi-head attention kernel without projections.
///
/// Each head sees a contiguous `d / heads` column slice of `q`, `k` and `v`,
/// scores are scaled by `1/sqrt(d / heads)`, and head outputs are
/// concatenated back to width `d`.
pub fn attend(g: &mut Graph<'_>, q: Var, k: Var, v: Var, heads: usize) -> Result<Attended> {
    let d = g.shape(q)[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "width {d} is not divisible by {heads} heads"
        )));
    }
    if g.shape(k)[1] != d || g.shape(v)[1] != d || g.shape(k)[0] != g.shape(v)[0] {
        return Err(Error::Dimension(format!(
            "attention q {:?}, k {:?}, v {:?}",
            g.shape(q),
            g.shape(k),
            g.shape(v)
        )));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut head_weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            let (a, b) = (h * dh, (h + 1) * dh);
            (g.slice_cols(q, a, b)?, g.slice_cols(k, a, b)?, g.slice_cols(v, a, b)?)
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale)?;
        let weights = g.softmax_rows(scores)?;
        head_weights.push(g.value(weights).clone());
        outs.push(g.matmul(weights, vh)?);
    }
    let out = g.concat_cols(&outs)?;
    let weights = if heads == 1 {
        head_weights[0].clone()
    } else {
        let mut mean = Tensor::zeros(head_weights[0].shape());
        for w in &head_weights {
            mean.add_assign(w);
        }
        mean.map(|x| x / heads as f64)
    };
    Ok(Attended {
        out,
        weights,
        head_weights,
    })
}

/// Cross-attention block with query/key/value/output projections.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    q_proj: Projection,
    k_proj: Projection,
    v_proj: Projection,
    out_proj: Projection,
    dim: usize,
    heads: usize,
}

impl CrossAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        identity_projections: bool,
        group: ParamGroup,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "width {dim} is not divisible by {heads} heads"
            )));
        }
        let mut make = |suffix: &str| -> Result<Projection> {
            if identity_projections {
                Ok(Projection::Identity)
            } else {
                Ok(Projection::Linear(LinearLayer::new(
                    store,
                    &format!("{name}.{suffix}"),
                    dim,
                    dim,
                    group,
                    rng,
                )?))
            }
        };
        Ok(Self {
            q_proj: make("q")?,
            k_proj: make("k")?,
            v_proj: make("v")?,
            out_proj: make("o")?,
            dim,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn forward(&self, g: &mut Graph<'_>, q: Var, k: Var, v: Var) -> Result<Attended> {
        let qp = self.q_proj.forward(g, q)?;
        let kp = self.k_proj.forward(g, k)?;
        let vp = self.v_proj.forward(g, v)?;
        let mut att = attend(g, qp, kp, vp, self.heads)?;
        att.out = self.out_proj.forward(g, att.out)?;
        Ok(att)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.q_proj, &self.k_proj, &self.v_proj, &self.out_proj]
            .iter()
            .flat_map(|p| p.params())
            .collect()
    }
}
