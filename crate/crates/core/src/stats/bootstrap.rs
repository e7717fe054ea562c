use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{auprc, log_loss};
use crate::math::quantile_sorted;
use crate::seed::{derive_seed, rng};
use crate::{Error, Result};

/// Redraw budget for a replicate that came out single-class.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auprc,
    LogLoss,
}

impl Metric {
    pub fn compute(self, y: &[u8], scores: &[f64]) -> Result<f64> {
        match self {
            Metric::Auprc => auprc(y, scores),
            Metric::LogLoss => log_loss(y, scores),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSamples {
    pub metric: Metric,
    pub replicates: Vec<f64>,
    /// Lower-middle order statistic of the replicates.
    pub median: f64,
    pub iqr: f64,
    pub seed: u64,
    /// Replicates dropped after exhausting the redraw budget.
    pub skipped: usize,
}

impl MetricSamples {
    pub fn from_replicates(metric: Metric, replicates: Vec<f64>, seed: u64, skipped: usize) -> Self {
        let mut sorted = replicates.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[(sorted.len() - 1) / 2];
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        MetricSamples { metric, replicates, median, iqr, seed, skipped }
    }
}

/// `b` with-replacement resamples of `(y, scores)`; replicate `r` draws from
/// the stream `derive_seed(seed, r)`, so replicates are independent of
/// evaluation order.
pub fn bootstrap_metrics(
    y: &[u8],
    scores: &[f64],
    b: usize,
    seed: u64,
    metrics: &[Metric],
) -> Result<Vec<MetricSamples>> {
    if y.len() != scores.len() {
        return Err(Error::Shape { expected: y.len(), got: scores.len() });
    }
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::UndefinedMetric("bootstrap needs both classes".into()));
    }
    let n = y.len();
    let mut reps: Vec<Vec<f64>> = metrics.iter().map(|_| Vec::with_capacity(b)).collect();
    let mut skipped = 0;
    let mut ry = Vec::with_capacity(n);
    let mut rs = Vec::with_capacity(n);
    for r in 0..b {
        let mut rng = rng(derive_seed(seed, r as u64));
        let mut ok = false;
        for _ in 0..MAX_REDRAWS {
            ry.clear();
            rs.clear();
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                ry.push(y[i]);
                rs.push(scores[i]);
            }
            let p = ry.iter().filter(|&&v| v == 1).count();
            if p > 0 && p < n {
                ok = true;
                break;
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        for (m, out) in metrics.iter().zip(reps.iter_mut()) {
            out.push(m.compute(&ry, &rs)?);
        }
    }
    if skipped == b {
        return Err(Error::Bootstrap(format!("all {b} replicates were single-class")));
    }
    Ok(metrics
        .iter()
        .zip(reps)
        .map(|(&m, r)| MetricSamples::from_replicates(m, r, seed, skipped))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replicate_median() {
        let y = [0, 1, 0, 1, 1, 0];
        let s = [0.2, 0.7, 0.4, 0.9, 0.3, 0.1];
        let out = bootstrap_metrics(&y, &s, 1, 3, &[Metric::Auprc]).unwrap();
        assert_eq!(out[0].replicates.len(), 1);
        assert_eq!(out[0].median, out[0].replicates[0]);
    }

    #[test]
    fn deterministic_for_seed() {
        let y = [0, 1, 0, 1, 1, 0, 0, 0];
        let s = [0.2, 0.7, 0.4, 0.9, 0.3, 0.1, 0.5, 0.6];
        let a = bootstrap_metrics(&y, &s, 50, 11, &[Metric::Auprc, Metric::LogLoss]).unwrap();
        let b = bootstrap_metrics(&y, &s, 50, 11, &[Metric::Auprc, Metric::LogLoss]).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_metrics(&y, &s, 50, 12, &[Metric::Auprc]).unwrap();
        assert_ne!(a[0].replicates, c[0].replicates);
    }

    #[test]
    fn perfect_scores_have_zero_spread() {
        let y: Vec<u8> = (0..2000).map(|i| (i % 2) as u8).collect();
        let s: Vec<f64> = y.iter().map(|&v| v as f64 * 0.8 + 0.1).collect();
        let out = bootstrap_metrics(&y, &s, 40, 5, &[Metric::Auprc]).unwrap();
        assert!(out[0].replicates.iter().all(|&v| v == 1.0));
        assert_eq!(out[0].iqr, 0.0);
        assert_eq!(out[0].median, 1.0);
    }

    #[test]
    fn rejects_single_class() {
        assert!(bootstrap_metrics(&[1, 1], &[0.5, 0.5], 5, 0, &[Metric::Auprc]).is_err());
    }
}
