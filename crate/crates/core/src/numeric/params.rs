//! Parameter registry shared by every layer of a model.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which part of the model a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Encoder,
    Resampler,
    Head,
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Resampler => "resampler",
            ParamGroup::Head => "head",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub group: ParamGroup,
    pub requires_grad: bool,
    /// Never trainable, whatever stage is active.
    pub permanently_frozen: bool,
    pub grad: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable parameter. Names must be unique.
    pub fn register(&mut self, name: &str, value: Tensor, group: ParamGroup) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("parameter {name:?} registered twice")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("parameter registration"));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.to_owned(),
            value,
            group,
            requires_grad: true,
            permanently_frozen: false,
            grad: None,
        });
        self.by_name.insert(name.to_owned(), id);
        Ok(id)
    }

    /// Seeded `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn register_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        group: ParamGroup,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        self.register(name, Tensor::new(shape.to_vec(), data)?, group)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn group_ids(&self, group: ParamGroup) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.group == group)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn freeze_permanently(&mut self, id: ParamId) {
        let p = &mut self.params[id.0];
        p.permanently_frozen = true;
        p.requires_grad = false;
        p.grad = None;
    }

    /// Sets `requires_grad`; permanently frozen parameters stay frozen.
    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        let p = &mut self.params[id.0];
        p.requires_grad = trainable && !p.permanently_frozen;
        if !p.requires_grad {
            p.grad = None;
        }
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].requires_grad
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// SHA-256 over names, shapes and little-endian values of a group.
    pub fn group_digest(&self, group: ParamGroup) -> String {
        let mut hasher = Sha256::new();
        for (_, p) in self.iter().filter(|(_, p)| p.group == group) {
            hasher.update(p.name.as_bytes());
            for &e in p.value.shape() {
                hasher.update((e as u64).to_le_bytes());
            }
            for v in p.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
