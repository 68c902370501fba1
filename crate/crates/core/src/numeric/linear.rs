use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamGroup, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `y = x · W + b` with `W [d_in, d_out]`, `b [d_out]`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    d_in: usize,
    d_out: usize,
}

impl LinearLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        group: ParamGroup,
        rng: &mut R,
    ) -> Result<Self> {
        let weight =
            store.register_uniform(&format!("{name}.weight"), &[d_in, d_out], d_in, group, rng)?;
        let bias = store.register_uniform(&format!("{name}.bias"), &[d_out], d_in, group, rng)?;
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    /// Identity weights and zero bias.
    pub fn identity(store: &mut ParamStore, name: &str, dim: usize, group: ParamGroup) -> Result<Self> {
        Self::from_values(store, name, Tensor::identity(dim), Tensor::zeros(&[dim]), group)
    }

    pub fn from_values(
        store: &mut ParamStore,
        name: &str,
        weight: Tensor,
        bias: Tensor,
        group: ParamGroup,
    ) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || bias.len() != weight.cols() {
            return Err(Error::Dimension(format!(
                "linear layer {name}: weight {:?}, bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        let (d_in, d_out) = (weight.rows(), weight.cols());
        let weight = store.register(&format!("{name}.weight"), weight, group)?;
        let bias = store.register(&format!("{name}.bias"), bias, group)?;
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        if g.shape(x).last() != Some(&self.d_in) {
            return Err(Error::Config(format!(
                "linear layer expects width {}, got input {:?}",
                self.d_in,
                g.shape(x)
            )));
        }
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}
