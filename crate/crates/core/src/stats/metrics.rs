use alloc::vec::Vec;

use crate::{Error, Result};

pub const LOG_LOSS_EPS: f64 = 1e-15;

/// Average precision: `sum_k (R_k - R_{k-1}) P_k` over descending score
/// thresholds, with tied scores entering as one threshold group.
pub fn auprc(y: &[u8], scores: &[f64]) -> Result<f64> {
    if y.len() != scores.len() {
        return Err(Error::Shape { expected: y.len(), got: scores.len() });
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::UndefinedMetric("AUPRC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let total = positives as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn log_loss(y: &[u8], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::Shape { expected: y.len(), got: p.len() });
    }
    if y.is_empty() {
        return Err(Error::UndefinedMetric("log loss of an empty sample".into()));
    }
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let q = pi.clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
            if yi == 1 {
                libm::log(q)
            } else {
                libm::log(1.0 - q)
            }
        })
        .sum();
    Ok(-sum / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking_is_one() {
        let y = [0, 1, 0, 1, 1];
        let s = [0.1, 0.9, 0.2, 0.8, 0.7];
        assert_eq!(auprc(&y, &s).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_gives_prevalence() {
        let y = [0, 1, 0, 0, 1];
        assert!((auprc(&y, &[0.3; 5]).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn worked_sweep() {
        let v = auprc(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.6]).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auprc(&[1, 1], &[0.1, 0.2]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn log_loss_values() {
        assert!(log_loss(&[1, 0], &[1.0, 0.0]).unwrap() <= 2e-15);
        let half = log_loss(&[1, 0, 1], &[0.5; 3]).unwrap();
        assert!((half - core::f64::consts::LN_2).abs() < 1e-12);
        let clamped = log_loss(&[1], &[0.0]).unwrap();
        assert!((clamped - 34.538_776_394_910_684).abs() < 1e-9);
    }
}
