//! Exact path-dependent TreeSHAP and train-fit standardisation of the
//! resulting attribution matrices.
//!
//! Attributions are in margin (log-odds) units. For every row
//! `base_value + sum_j phi_j` reproduces the ensemble margin.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gbdt::{TreeEnsemble, TreeNode};
use crate::table::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub values: Matrix,
    /// Expected margin under the trees' cover weights.
    pub base_value: f64,
    pub feature_names: Vec<String>,
}

impl ShapMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> ShapMatrix {
        ShapMatrix {
            values: self.values.select_rows(rows),
            base_value: self.base_value,
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend(path: &mut Vec<PathElement>, depth: usize, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    path.truncate(depth);
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElement>, depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.truncate(depth);
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one = path[depth].pweight;
    let mut total = 0.0;
    if one != 0.0 {
        for i in (0..depth).rev() {
            let tmp = next_one / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight / (zero * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    node: &TreeNode,
    x: &[f64],
    phi: &mut [f64],
    parent: &[PathElement],
    mut depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    let mut path: Vec<PathElement> = parent[..depth.min(parent.len())].to_vec();
    extend(&mut path, depth, zero_fraction, one_fraction, feature);

    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..=depth {
                let w = unwound_sum(&path, depth, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
        }
        TreeNode::Split { feature: split, threshold, cover, left, right } => {
            let (hot, cold) = if x[*split] < *threshold { (left, right) } else { (right, left) };
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) = (1..=depth).find(|&k| path[k].feature == Some(*split)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, depth, k);
                depth -= 1;
            }
            let hot_zero = hot.cover() / cover;
            let cold_zero = cold.cover() / cover;
            recurse(hot, x, phi, &path, depth + 1, hot_zero * incoming_zero, incoming_one, Some(*split));
            recurse(cold, x, phi, &path, depth + 1, cold_zero * incoming_zero, 0.0, Some(*split));
        }
    }
}

/// Raw (unscaled) SHAP values of one tree for one row.
pub fn tree_shap_row(tree: &TreeNode, x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, x, &mut phi, &[], 0, 1.0, 1.0, None);
    phi
}

/// Path-dependent TreeSHAP for every row of `x`. Ensemble values are the
/// learning-rate-weighted sum of per-tree values; the base value is
/// `base_score + learning_rate * sum_t E_cover[tree_t]`.
pub fn tree_shap(model: &TreeEnsemble, x: &Matrix, feature_names: &[String]) -> Result<ShapMatrix> {
    model.validate()?;
    if x.cols() != model.n_features {
        return Err(Error::Shape { expected: model.n_features, got: x.cols() });
    }
    if feature_names.len() != model.n_features {
        return Err(Error::Shape { expected: model.n_features, got: feature_names.len() });
    }
    let d = model.n_features;
    let mut values = Matrix::zeros(x.rows(), d);
    let mut phi = vec![0.0; d];
    for i in 0..x.rows() {
        phi.iter_mut().for_each(|v| *v = 0.0);
        for tree in &model.trees {
            recurse(tree, x.row(i), &mut phi, &[], 0, 1.0, 1.0, None);
        }
        for (out, v) in values.row_mut(i).iter_mut().zip(&phi) {
            *out = model.learning_rate * v;
        }
    }
    let expected: f64 = model.trees.iter().map(TreeNode::expected_value).sum();
    Ok(ShapMatrix {
        values,
        base_value: model.base_score + model.learning_rate * expected,
        feature_names: feature_names.to_vec(),
    })
}

/// Per-feature z-score parameters fit on train attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (denominator n).
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

pub fn standardize_fit(values: &Matrix) -> Result<StandardizationStats> {
    let n = values.rows();
    if n < 2 {
        return Err(Error::Config("standardisation needs at least two rows".into()));
    }
    let mut mean = Vec::with_capacity(values.cols());
    let mut std = Vec::with_capacity(values.cols());
    let mut zero_variance = Vec::with_capacity(values.cols());
    for j in 0..values.cols() {
        let col = values.column(j);
        if col.iter().all(|&v| v == col[0]) {
            mean.push(col[0]);
            std.push(0.0);
            zero_variance.push(true);
            continue;
        }
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = libm::sqrt(var);
        mean.push(m);
        std.push(s);
        zero_variance.push(s == 0.0);
    }
    Ok(StandardizationStats { mean, std, zero_variance })
}

/// `(value - mean) / std` per column; zero-variance columns map to 0.
pub fn standardize_apply(values: &Matrix, stats: &StandardizationStats) -> Result<Matrix> {
    if values.cols() != stats.mean.len() {
        return Err(Error::Shape { expected: stats.mean.len(), got: values.cols() });
    }
    let mut out = Matrix::zeros(values.rows(), values.cols());
    for i in 0..values.rows() {
        for j in 0..values.cols() {
            if !stats.zero_variance[j] {
                out.set(i, j, (values.get(i, j) - stats.mean[j]) / stats.std[j]);
            }
        }
    }
    Ok(out)
}

pub fn standardize_row(row: &[f64], stats: &StandardizationStats) -> Result<Vec<f64>> {
    let m = standardize_apply(&Matrix::new(1, row.len(), row.to_vec()), stats)?;
    Ok(m.row(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| alloc::format!("f{i}")).collect()
    }

    #[test]
    fn single_leaf_tree() {
        let m = TreeEnsemble {
            base_score: 0.2,
            learning_rate: 0.5,
            n_features: 2,
            trees: vec![TreeNode::Leaf { value: 3.0, cover: 10.0 }],
        };
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let s = tree_shap(&m, &x, &names(2)).unwrap();
        assert_eq!(s.values.row(0), &[0.0, 0.0]);
        assert_eq!(s.base_value, 0.2 + 0.5 * 3.0);
    }

    #[test]
    fn depth_one_half_cover() {
        let tree = TreeNode::Split {
            feature: 1,
            threshold: 0.5,
            cover: 8.0,
            left: Box::new(TreeNode::Leaf { value: -2.0, cover: 4.0 }),
            right: Box::new(TreeNode::Leaf { value: 6.0, cover: 4.0 }),
        };
        let phi = tree_shap_row(&tree, &[9.0, 0.0, 9.0], 3);
        assert_eq!(phi, vec![0.0, (-2.0 - 6.0) / 2.0, 0.0]);
    }

    #[test]
    fn zero_cover_rejected() {
        let m = TreeEnsemble {
            base_score: 0.0,
            learning_rate: 1.0,
            n_features: 1,
            trees: vec![TreeNode::Split {
                feature: 0,
                threshold: 0.0,
                cover: 0.0,
                left: Box::new(TreeNode::Leaf { value: 1.0, cover: 0.0 }),
                right: Box::new(TreeNode::Leaf { value: 1.0, cover: 0.0 }),
            }],
        };
        let x = Matrix::from_rows(&[vec![0.0]]);
        assert!(matches!(tree_shap(&m, &x, &names(1)), Err(Error::ModelIntegrity(_))));
    }

    #[test]
    fn standardisation_rules() {
        let m = Matrix::from_rows(&[vec![-1.0, 0.1], vec![1.0, 0.1]]);
        let s = standardize_fit(&m).unwrap();
        assert_eq!(s.mean, vec![0.0, 0.1]);
        assert_eq!(s.std, vec![1.0, 0.0]);
        assert_eq!(s.zero_variance, vec![false, true]);
        let z = standardize_apply(&m, &s).unwrap();
        assert_eq!(z.column(1), vec![0.0, 0.0]);
        assert_eq!(z.column(0), vec![-1.0, 1.0]);
        assert!(standardize_fit(&Matrix::from_rows(&[vec![1.0]])).is_err());
        assert!(standardize_apply(&Matrix::from_rows(&[vec![1.0]]), &s).is_err());
    }
}
