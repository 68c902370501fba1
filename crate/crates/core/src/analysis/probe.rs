//! Query-zeroing probe and the redundancy index over its curve.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{SyntheticTask, ToyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Random,
    First,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroingSpec {
    pub fraction: f64,
    pub selection: Selection,
    pub seed: u64,
}

impl ZeroingSpec {
    pub fn count(&self, total: usize) -> usize {
        (self.fraction * total as f64).round() as usize
    }

    /// Row multipliers over `total` resampled queries: 0 for zeroed rows.
    pub fn mask(&self, total: usize) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Argument(format!("zeroing fraction {} outside [0, 1]", self.fraction)));
        }
        let k = self.count(total);
        let mut mask = vec![1.0; total];
        match self.selection {
            Selection::First => mask[..k].fill(0.0),
            Selection::Last => mask[total - k..].fill(0.0),
            Selection::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                for i in sample(&mut rng, total, k) {
                    mask[i] = 0.0;
                }
            }
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePoint {
    pub fraction: f64,
    pub zeroed: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub retention_mean: f64,
    pub retention_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub points: Vec<ProbePoint>,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub warnings: Vec<String>,
}

impl ProbeResult {
    /// `(fraction, mean retention)` pairs.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.fraction, p.retention_mean)).collect()
    }

    pub fn at(&self, fraction: f64) -> Option<&ProbePoint> {
        self.points.iter().find(|p| (p.fraction - fraction).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,zeroed,accuracy_mean,accuracy_sd,retention_mean,retention_sd\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.fraction, p.zeroed, p.accuracy_mean, p.accuracy_sd, p.retention_mean, p.retention_sd
            ));
        }
        s
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Accuracy under query zeroing, per fraction, averaged over seeds. Each
/// seed fixes both the evaluation clips and the random selection.
/// Retention divides by the same seed's unzeroed accuracy.
pub fn zeroing_probe(
    model: &ToyModel,
    task: &SyntheticTask,
    fractions: &[f64],
    selection: Selection,
    seeds: &[u64],
    samples: usize,
) -> Result<ProbeResult> {
    if !fractions.contains(&0.0) {
        return Err(Error::Argument("probe fractions must include 0".into()));
    }
    if seeds.is_empty() || samples == 0 {
        return Err(Error::Argument("probe needs at least one seed and one sample".into()));
    }
    model.config().check_task(task)?;
    let q = model.config().total_queries;
    let mut warnings = Vec::new();
    if model.trained_steps() == 0 {
        warnings.push("probe run on an untrained model; retention is not meaningful".to_string());
    }

    let mut baseline = Vec::with_capacity(seeds.len());
    let mut per_fraction: Vec<Vec<f64>> = vec![Vec::new(); fractions.len()];
    for &seed in seeds {
        let batch = task.generate(samples, seed)?;
        let accuracy = |mask: Option<&[f64]>| -> Result<f64> {
            let predicted = model.predict_masked(&batch.sequences, mask)?;
            let hits = predicted.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
            Ok(hits as f64 / samples as f64)
        };
        baseline.push(accuracy(None)?);
        for (i, &fraction) in fractions.iter().enumerate() {
            let mask = ZeroingSpec { fraction, selection, seed }.mask(q)?;
            per_fraction[i].push(accuracy(Some(&mask))?);
        }
    }
    if baseline.contains(&0.0) {
        warnings.push("unzeroed accuracy is 0 for some seed; its retention is reported as 0".to_string());
    }

    let points = fractions
        .iter()
        .zip(&per_fraction)
        .map(|(&fraction, accs)| {
            let (accuracy_mean, accuracy_sd) = mean_sd(accs);
            let (retention_mean, retention_sd) = if fraction == 0.0 {
                (1.0, 0.0)
            } else {
                let r: Vec<f64> = accs
                    .iter()
                    .zip(&baseline)
                    .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
                    .collect();
                mean_sd(&r)
            };
            ProbePoint {
                fraction,
                zeroed: ZeroingSpec { fraction, selection, seed: 0 }.count(q),
                accuracy_mean,
                accuracy_sd,
                retention_mean,
                retention_sd,
            }
        })
        .collect();
    Ok(ProbeResult {
        points,
        seeds: seeds.to_vec(),
        samples,
        warnings,
    })
}

/// Fractions a curve must cover for [`redundancy_index`].
pub const INDEX_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Trapezoidal area under retention against fraction zeroed, with
/// retention clamped to `[0, 1]`.
pub fn redundancy_index(curve: &[(f64, f64)]) -> Result<f64> {
    for f in INDEX_FRACTIONS {
        if !curve.iter().any(|(x, _)| (x - f).abs() < 1e-12) {
            return Err(Error::Argument(format!("retention curve is missing fraction {f}")));
        }
    }
    let mut pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(x, _)| (0.0..=1.0).contains(x))
        .map(|&(x, r)| (x, r.clamp(0.0, 1.0)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}
