//! Independent reference implementations used by the integration tests.
//! Each one is written for clarity, not speed.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapgroups_core::gbdt::{fit, Hyperparams, TreeEnsemble, TreeNode};
use shapgroups_core::table::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform features in [-2, 2] with a logistic outcome driven by a random
/// linear term and one pairwise interaction, then a fitted ensemble.
pub fn random_trained_ensemble(seed: u64, d: usize, n_trees: usize, depth: usize) -> (TreeEnsemble, Matrix) {
    let mut r = rng(seed);
    let n = 200;
    let x = Matrix::new(n, d, (0..n * d).map(|_| r.gen_range(-2.0..2.0)).collect());
    let beta: Vec<f64> = (0..d).map(|_| r.gen_range(-1.5..1.5)).collect();
    let y: Vec<u8> = (0..n)
        .map(|i| {
            let row = x.row(i);
            let mut m: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            if d > 1 {
                m += row[0] * row[d - 1];
            }
            let p = 1.0 / (1.0 + (-m).exp());
            u8::from(r.gen::<f64>() < p)
        })
        .collect();
    let hp = Hyperparams {
        n_trees,
        max_depth: depth,
        learning_rate: r.gen_range(0.05..0.5),
        min_child_weight: 0.5,
        l2_lambda: 1.0,
        min_split_gain: 0.0,
    };
    (fit(&x, &y, &hp).unwrap(), x)
}

/// Expected raw tree output given only the features in `subset`, using
/// node covers as conditional weights.
fn conditional_expectation(node: &TreeNode, x: &[f64], subset: u32) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split { feature, threshold, cover, left, right } => {
            if subset & (1 << feature) != 0 {
                let next = if x[*feature] < *threshold { left } else { right };
                conditional_expectation(next, x, subset)
            } else {
                (left.cover() * conditional_expectation(left, x, subset)
                    + right.cover() * conditional_expectation(right, x, subset))
                    / cover
            }
        }
    }
}

/// Exhaustive-subset Shapley values of the ensemble margin for one row.
/// Returns `(base_value, phi)`.
pub fn shap_oracle(model: &TreeEnsemble, x: &[f64]) -> (f64, Vec<f64>) {
    let d = model.n_features;
    assert!(d <= 16);
    let value = |s: u32| {
        model.base_score
            + model.learning_rate * model.trees.iter().map(|t| conditional_expectation(t, x, s)).sum::<f64>()
    };
    let values: Vec<f64> = (0..1u32 << d).map(value).collect();
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0..1u32 << d {
            if s & (1 << i) != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            let w = fact(k) * fact(d - k - 1) / fact(d);
            *p += w * (values[(s | (1 << i)) as usize] - values[s as usize]);
        }
    }
    (values[0], phi)
}

/// Average precision from an explicit confusion matrix at every distinct
/// threshold, highest first.
pub fn auprc_oracle(y: &[u8], s: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (yi, si) in y.iter().zip(s) {
            if *si >= t {
                if *yi == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Two-sided exact Mann-Whitney p by enumerating every assignment of the
/// pooled values to the first sample (no ties assumed).
pub fn mwu_exact_oracle(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, total) = (a.len(), pooled.len());
    let u_of = |first: &[f64], second: &[f64]| {
        first.iter().map(|x| second.iter().filter(|y| x > y).count()).sum::<usize>()
    };
    let observed = u_of(a, b);
    let (mut le, mut ge, mut count) = (0usize, 0usize, 0usize);
    for mask in 0u32..1 << total {
        if mask.count_ones() as usize != n {
            continue;
        }
        let (first, second): (Vec<f64>, Vec<f64>) = {
            let mut f = Vec::new();
            let mut s = Vec::new();
            for (i, v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    f.push(*v);
                } else {
                    s.push(*v);
                }
            }
            (f, s)
        };
        let u = u_of(&first, &second);
        count += 1;
        le += usize::from(u <= observed);
        ge += usize::from(u >= observed);
    }
    (2.0 * le.min(ge) as f64 / count as f64).min(1.0)
}

/// Upper tail of chi-squared with one degree of freedom via Simpson
/// integration of the standard normal density: `P = 1 - 2 int_0^sqrt(x) phi`.
pub fn chi2_df1_sf_oracle(x: f64) -> f64 {
    let z = x.sqrt();
    let n = 20_000;
    let h = z / n as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = phi(0.0) + phi(z);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(i as f64 * h);
    }
    1.0 - 2.0 * sum * h / 3.0
}

/// Minimum spanning-tree weight over every labelled tree on `n` vertices,
/// enumerated through Pruefer sequences.
pub fn mst_exhaustive(n: usize, w: impl Fn(usize, usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return w(0, 1);
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        let mut degree = vec![1usize; n];
        for &v in &seq {
            degree[v] += 1;
        }
        let mut total = 0.0;
        for &v in &seq {
            let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
            total += w(leaf, v);
            degree[leaf] -= 1;
            degree[v] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
        total += w(rest[0], rest[1]);
        best = best.min(total);

        let mut k = 0;
        while k < len {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == len {
            return best;
        }
    }
}

/// Two isotropic unit-variance Gaussian blobs in the plane whose centres
/// are `separation` apart. Returns points and planted labels.
pub fn two_blobs(n: usize, separation: f64, seed: u64) -> (Matrix, Vec<i64>) {
    let mut r = rng(seed);
    let mut gauss = || {
        let u1: f64 = r.gen_range(f64::EPSILON..1.0);
        let u2: f64 = r.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let g = (i % 2) as i64;
        data.push(gauss() + g as f64 * separation);
        data.push(gauss());
        labels.push(g);
    }
    (Matrix::new(n, 2, data), labels)
}

/// Mean silhouette coefficient under Euclidean distance.
pub fn silhouette(points: &Matrix, labels: &[i64]) -> f64 {
    let n = points.rows();
    let dist = |i: usize, j: usize| {
        points.row(i).iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let mut groups: Vec<i64> = labels.to_vec();
    groups.sort();
    groups.dedup();
    let mut total = 0.0;
    for i in 0..n {
        let mean_to = |g: i64| {
            let (s, c) = (0..n)
                .filter(|&j| j != i && labels[j] == g)
                .fold((0.0, 0usize), |(s, c), j| (s + dist(i, j), c + 1));
            s / c.max(1) as f64
        };
        let a = mean_to(labels[i]);
        let b = groups.iter().filter(|&&g| g != labels[i]).map(|&g| mean_to(g)).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}
