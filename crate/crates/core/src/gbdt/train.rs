use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{Hyperparams, TreeEnsemble, TreeNode};
use crate::math::{logit, sigmoid};
use crate::table::Matrix;
use crate::{Error, Result};

const PREVALENCE_CLAMP: f64 = 1e-6;

/// Fits a boosted ensemble with exact greedy split search.
///
/// Candidate thresholds are midpoints between consecutive distinct values
/// inside a node. Split search scans features in index order and thresholds
/// in ascending order, keeping the first strictly best gain, so training is
/// deterministic.
pub fn fit(x: &Matrix, y: &[u8], hp: &Hyperparams) -> Result<TreeEnsemble> {
    hp.validate()?;
    if x.rows() != y.len() {
        return Err(Error::Shape { expected: x.rows(), got: y.len() });
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("feature matrix holds a non-finite value".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Training("both classes are required".into()));
    }

    let prevalence = (positives as f64 / y.len() as f64).clamp(PREVALENCE_CLAMP, 1.0 - PREVALENCE_CLAMP);
    let base_score = logit(prevalence);
    let sorted = presort(x);
    let mut margin = vec![base_score; y.len()];
    let mut grad = vec![0.0; y.len()];
    let mut hess = vec![0.0; y.len()];
    let mut trees = Vec::with_capacity(hp.n_trees);

    for _ in 0..hp.n_trees {
        for i in 0..y.len() {
            let p = sigmoid(margin[i]);
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of_row) = grow_tree(x, &sorted, &grad, &hess, hp);
        for (m, v) in margin.iter_mut().zip(&leaf_of_row) {
            *m += hp.learning_rate * v;
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble { base_score, learning_rate: hp.learning_rate, n_features: x.cols(), trees })
}

/// Row indices of every feature column in ascending value order (stable).
fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.cols())
        .map(|j| {
            let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)));
            idx
        })
        .collect()
}

struct BuildNode {
    grad: f64,
    hess: f64,
    split: Option<(usize, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct ScanState {
    gl: f64,
    hl: f64,
    last: f64,
    seen: bool,
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Grows one tree level by level. Returns the tree and each row's leaf value.
fn grow_tree(
    x: &Matrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    hp: &Hyperparams,
) -> (TreeNode, Vec<f64>) {
    let n = grad.len();
    let lambda = hp.l2_lambda;
    let mut nodes = vec![BuildNode { grad: grad.iter().sum(), hess: hess.iter().sum(), split: None }];
    // node id of every row; rows only ever sit in the current frontier
    let mut position = vec![0usize; n];
    let mut frontier = vec![0usize];

    for _depth in 0..hp.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (k, &id) in frontier.iter().enumerate() {
            slot[id] = k;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut states: Vec<ScanState> = frontier
            .iter()
            .map(|_| ScanState { gl: 0.0, hl: 0.0, last: 0.0, seen: false })
            .collect();

        for (feature, order) in sorted.iter().enumerate() {
            for s in states.iter_mut() {
                *s = ScanState { gl: 0.0, hl: 0.0, last: 0.0, seen: false };
            }
            for &r in order {
                let r = r as usize;
                let k = slot[position[r]];
                if k == usize::MAX {
                    continue;
                }
                let v = x.get(r, feature);
                let st = &mut states[k];
                if st.seen && v > st.last {
                    let node = &nodes[frontier[k]];
                    let (gl, hl) = (st.gl, st.hl);
                    let (gr, hr) = (node.grad - gl, node.hess - hl);
                    if hl >= hp.min_child_weight && hr >= hp.min_child_weight {
                        let gain = 0.5
                            * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
                                - node.grad * node.grad / (node.hess + lambda));
                        if gain > hp.min_split_gain && best[k].is_none_or(|b| gain > b.gain) {
                            best[k] = Some(Candidate { gain, feature, threshold: 0.5 * (st.last + v) });
                        }
                    }
                }
                st.gl += grad[r];
                st.hl += hess[r];
                st.last = v;
                st.seen = true;
            }
        }

        let mut next = Vec::new();
        for (k, &id) in frontier.iter().enumerate() {
            if let Some(c) = best[k] {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(BuildNode { grad: 0.0, hess: 0.0, split: None });
                nodes.push(BuildNode { grad: 0.0, hess: 0.0, split: None });
                nodes[id].split = Some((c.feature, c.threshold, left, right));
                next.push(left);
                next.push(right);
            }
        }
        for r in 0..n {
            let k = slot[position[r]];
            if k == usize::MAX {
                continue;
            }
            if let Some((feature, threshold, left, right)) = nodes[frontier[k]].split {
                let child = if x.get(r, feature) < threshold { left } else { right };
                position[r] = child;
                nodes[child].grad += grad[r];
                nodes[child].hess += hess[r];
            }
        }
        frontier = next;
    }

    let leaf_of_row = position
        .iter()
        .map(|&id| leaf_weight(nodes[id].grad, nodes[id].hess, lambda))
        .collect();
    (assemble(&nodes, 0, lambda), leaf_of_row)
}

fn assemble(nodes: &[BuildNode], id: usize, lambda: f64) -> TreeNode {
    let node = &nodes[id];
    match node.split {
        None => TreeNode::Leaf { value: leaf_weight(node.grad, node.hess, lambda), cover: node.hess },
        Some((feature, threshold, l, r)) => {
            let left = assemble(nodes, l, lambda);
            let right = assemble(nodes, r, lambda);
            TreeNode::Split {
                feature,
                threshold,
                cover: left.cover() + right.cover(),
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}
