use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Per-frame visual features `[frames, tokens_per_frame, dim]`, in
/// temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Tensor,
}

impl FeatureSequence {
    pub fn new(data: Tensor) -> Result<Self> {
        let shape = data.shape();
        if shape.len() != 3 {
            return Err(Error::Dimension(format!(
                "feature sequence must be [frames, tokens, dim], got {shape:?}"
            )));
        }
        if shape[0] == 0 || shape[1] == 0 {
            return Err(Error::Dimension(format!(
                "feature sequence needs at least one frame and token, got {shape:?}"
            )));
        }
        Ok(Self { data })
    }

    /// Stacks `[tokens, dim]` frames.
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Dimension("no frames".into()))?;
        let (t, d) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(frames.len() * t * d);
        for f in frames {
            if f.rows() != t || f.cols() != d {
                return Err(Error::Dimension(format!(
                    "frame shape {:?} differs from {:?}",
                    f.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(f.data());
        }
        Self::new(Tensor::new(vec![frames.len(), t, d], data)?)
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.data.shape()[2]
    }

    /// Concatenated length `frames · tokens_per_frame`.
    pub fn len(&self) -> usize {
        self.frames() * self.tokens_per_frame()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.data
    }

    /// Frames concatenated along the token axis, `[L, dim]`.
    pub fn concat(&self) -> Tensor {
        self.data
            .clone()
            .reshape(&[self.len(), self.dim()])
            .expect("length is shape product")
    }

    pub fn frame(&self, i: usize) -> Tensor {
        let (t, d) = (self.tokens_per_frame(), self.dim());
        Tensor::new(vec![t, d], self.data.data()[i * t * d..(i + 1) * t * d].to_vec())
            .expect("frame slice")
    }
}
