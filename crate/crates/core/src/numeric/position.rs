use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamGroup, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeKind {
    /// Trainable table, zero-initialized.
    Learned,
    Sinusoidal,
    None,
}

#[derive(Debug, Clone)]
enum Table {
    Learned(ParamId),
    Fixed(Tensor),
    None,
}

/// Additive position table over a concatenated token sequence.
#[derive(Debug, Clone)]
pub struct PositionEncoding {
    table: Table,
    max_len: usize,
    dim: usize,
}

impl PositionEncoding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: PeKind,
        max_len: usize,
        dim: usize,
        group: ParamGroup,
    ) -> Result<Self> {
        let table = match kind {
            PeKind::Learned => Table::Learned(store.register(
                &format!("{name}.table"),
                Tensor::zeros(&[max_len, dim]),
                group,
            )?),
            PeKind::Sinusoidal => Table::Fixed(sinusoidal_table(max_len, dim)),
            PeKind::None => Table::None,
        };
        Ok(Self {
            table,
            max_len,
            dim,
        })
    }

    pub fn none(dim: usize) -> Self {
        Self {
            table: Table::None,
            max_len: usize::MAX,
            dim,
        }
    }

    pub fn kind(&self) -> PeKind {
        match self.table {
            Table::Learned(_) => PeKind::Learned,
            Table::Fixed(_) => PeKind::Sinusoidal,
            Table::None => PeKind::None,
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param(&self) -> Option<ParamId> {
        match self.table {
            Table::Learned(id) => Some(id),
            _ => None,
        }
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len > self.max_len {
            return Err(Error::Capacity {
                len,
                max_len: self.max_len,
            });
        }
        Ok(())
    }

    /// `x + table[0..L]`; returns `x` untouched for [`PeKind::None`].
    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let len = g.shape(x)[0];
        self.check_len(len)?;
        if !matches!(self.table, Table::None) && g.shape(x)[1] != self.dim {
            return Err(Error::Config(format!(
                "position table width {} for input {:?}",
                self.dim,
                g.shape(x)
            )));
        }
        let rows = match &self.table {
            Table::None => return Ok(x),
            Table::Learned(id) => {
                let t = g.param(*id);
                g.slice_rows(t, 0, len)?
            }
            Table::Fixed(t) => g.constant(t.slice_rows(0, len))?,
        };
        g.add(x, rows)
    }
}

/// `pe[p, 2i] = sin(p / 10000^(2i/d))`, `pe[p, 2i+1] = cos(p / 10000^(2i/d))`.
pub fn sinusoidal_table(max_len: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(&[max_len, dim]);
    for p in 0..max_len {
        for j in 0..dim {
            let pair = (j / 2) * 2;
            let freq = 10000f64.powf(pair as f64 / dim as f64);
            let angle = p as f64 / freq;
            t.set(p, j, if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}
