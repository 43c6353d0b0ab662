//! Return and advantage estimators over one episode segment.
//!
//! `values[t]` is `V(o_t)` for each step of the segment. How the segment
//! ended decides the value used past its last step: zero after a true
//! termination, otherwise `V` of the final next observation.

/// How an episode segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentEnd {
    /// The environment terminated; nothing follows.
    Terminal,
    /// Time limit or epoch cutoff; bootstrap with this value.
    Bootstrap(f64),
}

impl SegmentEnd {
    pub fn value(self) -> f64 {
        match self {
            SegmentEnd::Terminal => 0.0,
            SegmentEnd::Bootstrap(v) => v,
        }
    }
}

/// λ-returns via `R_t = r_t + γ[(1−λ)V(o_{t+1}) + λR_{t+1}]`, seeded with
/// the end-of-segment value.
pub fn lambda_return(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64, end: SegmentEnd) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut out = vec![0.0; n];
    let tail = end.value();
    let mut next_return = tail;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { tail };
        let blend = if t + 1 < n {
            (1.0 - lambda) * next_value + lambda * next_return
        } else {
            tail
        };
        out[t] = rewards[t] + gamma * blend;
        next_return = out[t];
    }
    out
}

/// Fixed-horizon returns `Σ_{i<m} γ^i r_{t+i} + γ^m V(o_{t+m})` with
/// `m = min(n, T − t)`.
pub fn nstep_returns(rewards: &[f64], values: &[f64], gamma: f64, n: usize, end: SegmentEnd) -> Vec<f64> {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    assert!(n >= 1, "n-step horizon must be >= 1");
    let len = rewards.len();
    let value_at = |k: usize| if k < len { values[k] } else { end.value() };
    (0..len)
        .map(|t| {
            let stop = (t + n).min(len);
            let tail = value_at(stop);
            rewards[t..stop].iter().rev().fold(tail, |acc, &r| r + gamma * acc)
        })
        .collect()
}

/// Discounted rewards-to-go, bootstrapped with the end-of-segment value.
pub fn discounted_returns(rewards: &[f64], gamma: f64, end: SegmentEnd) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = end.value();
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Shifts and scales to mean 0, std 1 in place. Leaves (near-)constant
/// input untouched and returns false.
pub fn normalize_advantages(adv: &mut [f64]) -> bool {
    if adv.is_empty() {
        return false;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return false;
    }
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    true
}
