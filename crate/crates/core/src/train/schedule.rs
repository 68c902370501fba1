//! Linear warmup followed by cosine decay to zero.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupCosine {
    peak: f64,
    warmup_steps: usize,
    total_steps: usize,
}

/// Warmup length for a ratio: `ceil(ratio · total)`, where products that
/// land within 1e-9 of an integer count as that integer (0.03 · 1000 is
/// 30, not 31).
pub fn warmup_steps(ratio: f64, total_steps: usize) -> usize {
    let raw = ratio * total_steps as f64;
    let nearest = raw.round();
    if (raw - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        raw.ceil() as usize
    }
}

impl WarmupCosine {
    pub fn new(peak: f64, warmup_ratio: f64, total_steps: usize) -> Result<Self> {
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::Config(format!("learning rate {peak} must be positive")));
        }
        if !(0.0..1.0).contains(&warmup_ratio) {
            return Err(Error::Config(format!("warmup ratio {warmup_ratio} outside [0, 1)")));
        }
        if total_steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let warmup = warmup_steps(warmup_ratio, total_steps);
        Ok(Self {
            peak,
            warmup_steps: warmup.min(total_steps - 1),
            total_steps,
        })
    }

    pub fn warmup(&self) -> usize {
        self.warmup_steps
    }

    pub fn total(&self) -> usize {
        self.total_steps
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// `peak · t / t_w` during warmup, then
    /// `peak · ½(1 + cos(π (t − t_w) / (t_total − t_w)))`; zero past the end.
    pub fn lr(&self, step: usize) -> f64 {
        let (tw, tt) = (self.warmup_steps, self.total_steps);
        if step < tw {
            return self.peak * step as f64 / tw as f64;
        }
        if step >= tt {
            return 0.0;
        }
        let progress = (step - tw) as f64 / (tt - tw) as f64;
        self.peak * 0.5 * (1.0 + (PI * progress).cos())
    }
}
