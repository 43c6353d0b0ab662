use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Returns of one evaluation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub returns: Vec<f64>,
    pub mean: f64,
}

impl EvalRecord {
    pub fn new(step: usize, returns: Vec<f64>) -> Self {
        let mean = mean(&returns);
        Self { step, returns, mean }
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Highest per-record mean return over a run.
pub fn max_avg_return(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("max_avg_return of no records".into()));
    }
    Ok(records.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max))
}

/// Each seed's best mean, then averaged over seeds.
pub fn max_per_seed_mean(runs: &[Vec<EvalRecord>]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Contract("no runs to aggregate".into()));
    }
    let per_seed = runs.iter().map(|r| max_avg_return(r)).collect::<Result<Vec<_>>>()?;
    Ok(mean(&per_seed))
}

/// Mean curve across seeds on their shared steps, then its maximum.
pub fn max_of_mean_curve(runs: &[Vec<EvalRecord>]) -> Result<f64> {
    let (_, curve) = mean_curve(runs)?;
    Ok(curve.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Steps present in every run, with the across-seed mean at each.
pub fn mean_curve(runs: &[Vec<EvalRecord>]) -> Result<(Vec<usize>, Vec<f64>)> {
    if runs.is_empty() || runs.iter().any(|r| r.is_empty()) {
        return Err(Error::Contract("mean curve needs non-empty runs".into()));
    }
    let steps: Vec<usize> = runs[0]
        .iter()
        .map(|r| r.step)
        .filter(|s| runs.iter().all(|run| run.iter().any(|r| r.step == *s)))
        .collect();
    if steps.is_empty() {
        return Err(Error::Contract("runs share no evaluation step".into()));
    }
    let curve = steps
        .iter()
        .map(|s| {
            let vals: Vec<f64> = runs
                .iter()
                .map(|run| run.iter().find(|r| r.step == *s).expect("shared step").mean)
                .collect();
            mean(&vals)
        })
        .collect();
    Ok((steps, curve))
}

/// Median of a non-empty list (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Contract("median of nothing".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Index into `0..n` for any integer under half-sample symmetric
/// reflection (`d c b a | a b c d | d c b a`).
fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Normalized Gaussian kernel of radius `round(4σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (4.0 * sigma + 0.5).floor() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-0.5 * (x as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// 1-D Gaussian filter with reflecting boundaries; output has the input's
/// length.
pub fn gaussian_smooth(series: &[f64], sigma: f64) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let n = series.len();
    (0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * series[reflect_index(i + k as isize - radius, n)])
                .sum()
        })
        .collect()
}
