//! Frame index selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on sampled frames unless configured otherwise.
pub const DEFAULT_MAX_FRAMES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub total_frames: usize,
    /// Frames per second.
    pub frame_rate: f64,
}

impl VideoMeta {
    pub fn new(total_frames: usize, frame_rate: f64) -> Result<Self> {
        if total_frames == 0 {
            return Err(Error::Argument("video has no frames".into()));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::Argument(format!("frame rate {frame_rate} must be positive")));
        }
        Ok(Self {
            total_frames,
            frame_rate,
        })
    }

    /// Seconds.
    pub fn duration(&self) -> f64 {
        self.total_frames as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SampleSpec {
    Uniform { count: usize },
    Fps { rate: f64, max_frames: usize },
}

impl SampleSpec {
    pub fn sample(&self, meta: &VideoMeta) -> Result<Vec<usize>> {
        match *self {
            SampleSpec::Uniform { count } => uniform_sample(meta, count),
            SampleSpec::Fps { rate, max_frames } => fps_sample(meta, rate, max_frames),
        }
    }
}

/// Bin-center sampling: frame `floor((i + 0.5) · total / n)` for each of
/// `n` equal bins. Returns every frame when `n >= total`.
pub fn uniform_sample(meta: &VideoMeta, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Argument("uniform sampling needs at least one frame".into()));
    }
    let total = meta.total_frames;
    if n >= total {
        return Ok((0..total).collect());
    }
    // Integer form of floor((2i + 1) · total / 2n).
    Ok((0..n).map(|i| (2 * i + 1) * total / (2 * n)).collect())
}

/// Samples `rate` frames per second of video: frame `floor(j · fps / rate)`
/// for `j < floor(duration · rate)`. More than `max_frames` candidates
/// fall back to `uniform_sample(meta, max_frames)`. Clips shorter than one
/// sampling interval yield frame 0.
pub fn fps_sample(meta: &VideoMeta, rate: f64, max_frames: usize) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Argument(format!("sampling rate {rate} must be positive")));
    }
    if max_frames == 0 {
        return Err(Error::Argument("max_frames must be at least 1".into()));
    }
    let total = meta.total_frames;
    let count = (meta.duration() * rate).floor() as usize;
    let mut indices: Vec<usize> = Vec::with_capacity(count.min(total));
    for j in 0..count {
        let idx = ((j as f64 * meta.frame_rate / rate).floor() as usize).min(total - 1);
        if indices.last() != Some(&idx) {
            indices.push(idx);
        }
    }
    if indices.is_empty() {
        indices.push(0);
    }
    if indices.len() > max_frames {
        return uniform_sample(meta, max_frames);
    }
    Ok(indices)
}
