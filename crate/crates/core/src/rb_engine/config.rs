use serde::{Deserialize, Serialize};

use crate::error::{CharbError, Result};

fn one() -> usize {
    1
}

/// Sequence lengths, budget and seed of one RB run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub lengths: Vec<usize>,
    /// Sequences per plan, split equally across lengths.
    pub total_sequences: usize,
    #[serde(default = "one")]
    pub shots_per_sequence: usize,
    pub seed: u64,
    #[serde(default)]
    pub gate_dependent: bool,
}

impl ExperimentConfig {
    pub fn new(lengths: Vec<usize>, total_sequences: usize, seed: u64) -> Result<Self> {
        let c = Self { lengths, total_sequences, shots_per_sequence: 1, seed, gate_dependent: false };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(CharbError::InvalidInput("at least one sequence length is required".into()));
        }
        if self.lengths[0] == 0 || self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CharbError::InvalidInput("lengths must be ≥ 1 and strictly increasing".into()));
        }
        if self.total_sequences < 2 * self.lengths.len() {
            return Err(CharbError::InvalidInput(format!(
                "budget of {} sequences leaves fewer than two per length",
                self.total_sequences
            )));
        }
        if self.shots_per_sequence == 0 {
            return Err(CharbError::InvalidInput("shots_per_sequence must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Equal split with the remainder going to the shortest length.
    pub fn allocation(&self) -> Vec<usize> {
        let k = self.lengths.len();
        let mut out = vec![self.total_sequences / k; k];
        out[0] += self.total_sequences % k;
        out
    }
}

/// `count` distinct lengths spaced geometrically from 1 to `n_max`. A single
/// length is `n_max` itself.
pub fn default_lengths(n_max: usize, count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![n_max.max(1)];
    }
    if n_max <= count {
        return (1..=n_max.max(1)).collect();
    }
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for k in 0..count {
        let remaining = count - 1 - k;
        let t = k as f64 / (count - 1) as f64;
        let mut v = (n_max as f64).powf(t).round() as usize;
        if let Some(&last) = out.last() {
            v = v.max(last + 1);
        }
        out.push(v.min(n_max - remaining));
    }
    out
}

/// Length at which `|λ|^N ≈ e⁻²`, clamped to `[15, cap]`.
pub fn n_max_for_rate(lambda_abs: f64, cap: usize) -> usize {
    if !(lambda_abs > 0.0 && lambda_abs < 1.0) {
        return cap;
    }
    ((2.0 / -lambda_abs.ln()).round() as usize).clamp(15, cap.max(15))
}
