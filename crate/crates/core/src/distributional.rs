//! Categorical value distributions on a fixed, evenly spaced support.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("NaN target value at index {0}")]
    NanTarget(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("n-step window needs at least one reward")]
    EmptyRewards,
    #[error("discount factor {0} outside (0, 1]")]
    BadDiscount(f64),
}

/// Atom support `[v_min, v_max]` split into `n_bins` evenly spaced atoms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportSpec {
    v_min: f64,
    v_max: f64,
    n_bins: usize,
}

impl SupportSpec {
    pub fn new(v_min: f64, v_max: f64, n_bins: usize) -> Result<Self, DistError> {
        if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
            return Err(DistError::InvalidSupport(format!("need v_min < v_max, got [{v_min}, {v_max}]")));
        }
        if n_bins < 2 {
            return Err(DistError::InvalidSupport(format!("need at least 2 bins, got {n_bins}")));
        }
        Ok(Self { v_min, v_max, n_bins })
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Atom spacing; the last atom sits exactly on `v_max`.
    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.n_bins - 1) as f64
    }

    pub fn atom(&self, i: usize) -> f64 {
        if i + 1 == self.n_bins {
            self.v_max
        } else {
            self.v_min + i as f64 * self.delta()
        }
    }
}

pub fn atom_values(spec: &SupportSpec) -> Vec<f64> {
    (0..spec.n_bins).map(|i| spec.atom(i)).collect()
}

/// Probability vector over the atoms of a support.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueDistribution {
    probs: Vec<f64>,
}

impl ValueDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistError> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(DistError::InvalidDistribution("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DistError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// All mass on one atom.
    pub fn point(n_bins: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n_bins];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn uniform(n_bins: usize) -> Self {
        Self { probs: vec![1.0 / n_bins as f64; n_bins] }
    }

    /// Softmax of raw logits.
    pub fn from_logits(logits: &[f64]) -> Self {
        Self { probs: softmax(logits) }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

/// Discounted reward sum and bootstrap discount of an n-step window.
pub fn n_step_aggregate(rewards: &[f64], gamma: f64) -> Result<(f64, f64), DistError> {
    if rewards.is_empty() {
        return Err(DistError::EmptyRewards);
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(DistError::BadDiscount(gamma));
    }
    let mut sum = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        sum += discount * r;
        discount *= gamma;
    }
    Ok((sum, discount))
}

/// Projects a distribution over arbitrary `target_values` onto the support by clipping
/// each value into range and splitting its mass linearly between the bracketing atoms.
pub fn project(spec: &SupportSpec, target_values: &[f64], target_probs: &[f64]) -> Result<ValueDistribution, DistError> {
    if target_values.len() != target_probs.len() {
        return Err(DistError::LengthMismatch(target_values.len(), target_probs.len()));
    }
    if let Some(i) = target_values.iter().position(|v| v.is_nan()) {
        return Err(DistError::NanTarget(i));
    }
    let n = spec.n_bins;
    let delta = spec.delta();
    let mut out = vec![0.0; n];
    for (&v, &p) in target_values.iter().zip(target_probs) {
        if p == 0.0 {
            continue;
        }
        let b = ((v.clamp(spec.v_min, spec.v_max) - spec.v_min) / delta).clamp(0.0, (n - 1) as f64);
        let lower = b.floor();
        let l = lower as usize;
        let frac = b - lower;
        if frac == 0.0 || l + 1 >= n {
            out[l.min(n - 1)] += p;
        } else {
            out[l] += p * (1.0 - frac);
            out[l + 1] += p * frac;
        }
    }
    Ok(ValueDistribution { probs: out })
}

pub fn expected_value(spec: &SupportSpec, dist: &ValueDistribution) -> f64 {
    dist.probs.iter().enumerate().map(|(i, p)| p * spec.atom(i)).sum()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy `-sum target_i * log softmax(logits)_i` and its gradient with respect
/// to the logits.
pub fn critic_loss_and_grad(target: &ValueDistribution, predicted_logits: &[f64]) -> Result<(f64, Vec<f64>), DistError> {
    if target.probs.len() != predicted_logits.len() {
        return Err(DistError::LengthMismatch(target.probs.len(), predicted_logits.len()));
    }
    let max = predicted_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + predicted_logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = -target
        .probs
        .iter()
        .zip(predicted_logits)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, l)| t * (l - log_z))
        .sum::<f64>();
    let grad = predicted_logits
        .iter()
        .zip(&target.probs)
        .map(|(l, t)| (l - log_z).exp() - t)
        .collect();
    Ok((loss, grad))
}
