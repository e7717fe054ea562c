use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{fit, predict_proba, Hyperparams, TreeEnsemble};
use crate::preprocess::stratified_indices;
use crate::seed::derive_seed;
use crate::stats::{auprc, log_loss};
use crate::table::Matrix;
use crate::{Error, Result};

const TUNE_FRACTION: f64 = 0.8;
const PARTITION_ATTEMPTS: u64 = 10;

/// Search space used when a run does not supply its own grid:
/// depth {3, 4, 6} x learning rate {0.05, 0.1, 0.3} x trees {100, 300}.
pub fn default_grid() -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for &max_depth in &[3, 4, 6] {
        for &learning_rate in &[0.05, 0.1, 0.3] {
            for &n_trees in &[100, 300] {
                grid.push(Hyperparams {
                    n_trees,
                    max_depth,
                    learning_rate,
                    min_child_weight: 1.0,
                    l2_lambda: 1.0,
                    min_split_gain: 0.0,
                });
            }
        }
    }
    grid
}

/// Additive search space of depth-1 trees:
/// learning rate {0.1, 0.3} x trees {300, 500}.
pub fn stump_grid() -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for &learning_rate in &[0.1, 0.3] {
        for &n_trees in &[300, 500] {
            grid.push(Hyperparams { n_trees, max_depth: 1, learning_rate, ..Hyperparams::default() });
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: Hyperparams,
    pub validation_auprc: f64,
    pub validation_log_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub scores: Vec<GridScore>,
    pub chosen: usize,
    pub partition_seed: u64,
    pub tune_rows: usize,
    pub validation_rows: usize,
    /// Rows used by the final refit (all provided rows).
    pub refit_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub model: TreeEnsemble,
    pub chosen: Hyperparams,
    pub record: TuningRecord,
}

/// Grid search on an inner stratified 80/20 partition, scored by validation
/// AUPRC (ties: lower validation log loss, then earlier grid position), then
/// a refit of the winner on every provided row.
pub fn tune_and_fit(x: &Matrix, y: &[u8], grid: &[Hyperparams], seed: u64) -> Result<Tuned> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape { expected: x.rows(), got: y.len() });
    }
    let both = |idx: &[usize]| {
        let p = idx.iter().filter(|&&i| y[i] == 1).count();
        p > 0 && p < idx.len()
    };
    let mut partition = None;
    for attempt in 0..PARTITION_ATTEMPTS {
        let s = derive_seed(seed, attempt);
        if let Ok((tune, valid)) = stratified_indices(y, TUNE_FRACTION, s) {
            if both(&tune) && both(&valid) {
                partition = Some((tune, valid, s));
                break;
            }
        }
    }
    let (tune, valid, partition_seed) = partition.ok_or_else(|| {
        Error::Tuning("could not form two-class tuning and validation partitions".into())
    })?;

    let xt = x.select_rows(&tune);
    let yt: Vec<u8> = tune.iter().map(|&i| y[i]).collect();
    let xv = x.select_rows(&valid);
    let yv: Vec<u8> = valid.iter().map(|&i| y[i]).collect();

    let mut scores = Vec::with_capacity(grid.len());
    let mut chosen = 0;
    for (k, params) in grid.iter().enumerate() {
        let model = fit(&xt, &yt, params)?;
        let p = predict_proba(&model, &xv)?;
        let score = GridScore {
            params: *params,
            validation_auprc: auprc(&yv, &p)?,
            validation_log_loss: log_loss(&yv, &p)?,
        };
        if k > 0 {
            let best: &GridScore = &scores[chosen];
            let better = score.validation_auprc > best.validation_auprc
                || (score.validation_auprc == best.validation_auprc
                    && score.validation_log_loss < best.validation_log_loss);
            if better {
                chosen = k;
            }
        }
        scores.push(score);
    }
    let params = grid[chosen];
    let model = fit(x, y, &params)?;
    Ok(Tuned {
        model,
        chosen: params,
        record: TuningRecord {
            scores,
            chosen,
            partition_seed,
            tune_rows: tune.len(),
            validation_rows: valid.len(),
            refit_rows: y.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn data() -> (Matrix, Vec<u8>) {
        let rows: Vec<Vec<f64>> = (0..80).map(|i| vec![(i % 17) as f64, i as f64 / 10.0]).collect();
        let y: Vec<u8> = (0..80).map(|i| ((i % 17) > 10 || i % 11 == 0) as u8).collect();
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn single_point_grid_refits_on_all_rows() {
        let (x, y) = data();
        let hp = Hyperparams { n_trees: 5, ..Hyperparams::default() };
        let t = tune_and_fit(&x, &y, &[hp], 1).unwrap();
        assert_eq!(t.chosen, hp);
        assert_eq!(t.record.refit_rows, 80);
        assert_eq!(t.record.tune_rows + t.record.validation_rows, 80);
        assert_eq!(t.model, fit(&x, &y, &hp).unwrap());
    }

    #[test]
    fn dominant_point_wins() {
        let (x, y) = data();
        let weak = Hyperparams { n_trees: 1, max_depth: 1, min_split_gain: 1e300, ..Hyperparams::default() };
        let strong = Hyperparams { n_trees: 30, max_depth: 3, learning_rate: 0.3, ..Hyperparams::default() };
        let t = tune_and_fit(&x, &y, &[weak, strong], 4).unwrap();
        let s = &t.record.scores;
        assert!(s[1].validation_auprc > s[0].validation_auprc);
        assert_eq!(t.record.chosen, 1);
        assert_eq!(t.chosen, strong);
    }

    #[test]
    fn empty_grid() {
        let (x, y) = data();
        assert!(matches!(tune_and_fit(&x, &y, &[], 0), Err(Error::Config(_))));
    }

    #[test]
    fn default_grid_shape() {
        assert_eq!(default_grid().len(), 18);
    }
}
