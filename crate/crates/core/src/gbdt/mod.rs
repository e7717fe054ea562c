//! Gradient-boosted regression trees for binary outcomes (logistic loss,
//! second-order leaf updates).

mod train;
mod tune;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sigmoid;
use crate::table::Matrix;
use crate::{Error, Result};

pub use train::fit;
pub use tune::{default_grid, stump_grid, tune_and_fit, GridScore, Tuned, TuningRecord};

/// A node of a regression tree. Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Summed hessian of the rows reaching this node.
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    /// Raw leaf value reached by `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Cover-weighted mean leaf value.
    pub fn expected_value(&self) -> f64 {
        fn walk(node: &TreeNode) -> f64 {
            match node {
                TreeNode::Leaf { value, cover } => value * cover,
                TreeNode::Split { left, right, .. } => walk(left) + walk(right),
            }
        }
        walk(self) / self.cover()
    }

    fn check(&self, n_features: usize) -> Result<()> {
        match self {
            TreeNode::Leaf { value, .. } if !value.is_finite() => {
                Err(Error::ModelIntegrity("non-finite leaf value".into()))
            }
            TreeNode::Leaf { .. } => Ok(()),
            TreeNode::Split { feature, threshold, cover, left, right } => {
                if *feature >= n_features {
                    return Err(Error::ModelIntegrity(format!(
                        "split feature {feature} out of range ({n_features} features)"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::ModelIntegrity("non-finite threshold".into()));
                }
                if !(*cover > 0.0) {
                    return Err(Error::ModelIntegrity("internal node with zero cover".into()));
                }
                left.check(n_features)?;
                right.check(n_features)
            }
        }
    }
}

/// `margin(x) = base_score + learning_rate * sum_t tree_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    /// Structural checks: feature indices in range, finite values, positive
    /// cover on every internal node.
    pub fn validate(&self) -> Result<()> {
        self.trees.iter().try_for_each(|t| t.check(self.n_features))
    }

    pub fn margin_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.eval(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_features {
            return Err(Error::Shape { expected: self.n_features, got: x.cols() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    pub min_split_gain: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            min_split_gain: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.l2_lambda >= 0.0) || !(self.min_child_weight >= 0.0) || !(self.min_split_gain >= 0.0) {
            return Err(Error::Config("l2_lambda, min_child_weight and min_split_gain must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn predict_margin(model: &TreeEnsemble, x: &Matrix) -> Result<Vec<f64>> {
    model.check_width(x)?;
    Ok((0..x.rows()).map(|i| model.margin_row(x.row(i))).collect())
}

pub fn predict_proba(model: &TreeEnsemble, x: &Matrix) -> Result<Vec<f64>> {
    Ok(predict_margin(model, x)?.into_iter().map(sigmoid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stump(v_left: f64, v_right: f64) -> TreeNode {
        TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            cover: 2.0,
            left: Box::new(TreeNode::Leaf { value: v_left, cover: 1.0 }),
            right: Box::new(TreeNode::Leaf { value: v_right, cover: 1.0 }),
        }
    }

    #[test]
    fn empty_ensemble_is_base_score() {
        let m = TreeEnsemble { base_score: -0.7, learning_rate: 0.1, n_features: 2, trees: vec![] };
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(predict_margin(&m, &x).unwrap(), vec![-0.7, -0.7]);
    }

    #[test]
    fn duplicated_tree_adds_twice() {
        let one = TreeEnsemble { base_score: 0.0, learning_rate: 0.5, n_features: 1, trees: vec![stump(-1.0, 2.0)] };
        let mut two = one.clone();
        two.trees.push(stump(-1.0, 2.0));
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let a = predict_margin(&one, &x).unwrap();
        let b = predict_margin(&two, &x).unwrap();
        assert_eq!(b, vec![2.0 * a[0], 2.0 * a[1]]);
    }

    #[test]
    fn proba_at_zero_and_monotone() {
        let m = TreeEnsemble { base_score: 0.0, learning_rate: 1.0, n_features: 1, trees: vec![stump(-1.0, 2.0)] };
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        let p = predict_proba(&m, &x).unwrap();
        assert!(p[0] < p[1]);
        let zero = TreeEnsemble { trees: vec![], ..m };
        assert_eq!(predict_proba(&zero, &x).unwrap()[0], 0.5);
    }

    #[test]
    fn width_mismatch() {
        let m = TreeEnsemble { base_score: 0.0, learning_rate: 1.0, n_features: 3, trees: vec![] };
        let x = Matrix::from_rows(&[vec![0.0]]);
        assert_eq!(predict_margin(&m, &x), Err(Error::Shape { expected: 3, got: 1 }));
    }

    #[test]
    fn expected_value_weights_cover() {
        let t = TreeNode::Split {
            feature: 0,
            threshold: 0.0,
            cover: 4.0,
            left: Box::new(TreeNode::Leaf { value: 1.0, cover: 3.0 }),
            right: Box::new(TreeNode::Leaf { value: 5.0, cover: 1.0 }),
        };
        assert_eq!(t.expected_value(), 2.0);
    }
}
