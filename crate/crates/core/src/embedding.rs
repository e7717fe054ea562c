//! Two-dimensional UMAP layout of standardised attribution vectors.
//!
//! Construction: exact k-NN graph, per-point smooth distances (`rho`,
//! `sigma`), fuzzy union symmetrisation, and the usual attractive /
//! negative-sampled repulsive SGD against `1 / (1 + a d^{2b})`. New points
//! are placed, not optimised: each lands on the inverse-distance weighted
//! mean of its nearest training points' coordinates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::euclidean;
use crate::seed::rng;
use crate::table::Matrix;
use crate::{Error, Result};

const SIGMA_TOLERANCE: f64 = 1e-3;
const BISECTION_STEPS: usize = 200;
const GRAD_CLIP: f64 = 4.0;
const INIT_RANGE: f64 = 10.0;
const SPREAD: f64 = 1.0;
const TRANSFORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        UmapConfig { n_neighbors: 15, min_dist: 0.1, n_epochs: 200, negative_sample_rate: 5, seed: 0 }
    }
}

impl UmapConfig {
    pub fn validate(&self, n_rows: usize) -> Result<()> {
        if self.n_neighbors < 2 || self.n_neighbors >= n_rows {
            return Err(Error::Config(format!(
                "n_neighbors must satisfy 2 <= k < n ({} rows, k = {})",
                n_rows, self.n_neighbors
            )));
        }
        if !(self.min_dist > 0.0) {
            return Err(Error::Config("min_dist must be positive".into()));
        }
        Ok(())
    }
}

/// Exact k nearest neighbours of every point (self excluded), nearest first,
/// distance ties broken by lower row index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

pub fn knn_graph(points: &Matrix, k: usize) -> Result<KnnGraph> {
    let n = points.rows();
    if k >= n {
        return Err(Error::Config(format!("k = {k} must be below the point count {n}")));
    }
    let mut indices = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scratch.clear();
        scratch.extend((0..n).filter(|&j| j != i).map(|j| (euclidean(points.row(i), points.row(j)), j)));
        let (idx, dist) = nearest(&mut scratch, k);
        indices.push(idx);
        distances.push(dist);
    }
    Ok(KnnGraph { indices, distances })
}

/// Queries against a reference set (a query point may coincide with a reference point).
pub fn knn_query(reference: &Matrix, queries: &Matrix, k: usize) -> Result<KnnGraph> {
    if k == 0 || k > reference.rows() {
        return Err(Error::Config(format!("k = {k} must lie in 1..={}", reference.rows())));
    }
    if reference.cols() != queries.cols() {
        return Err(Error::Shape { expected: reference.cols(), got: queries.cols() });
    }
    let mut indices = Vec::with_capacity(queries.rows());
    let mut distances = Vec::with_capacity(queries.rows());
    let mut scratch = Vec::with_capacity(reference.rows());
    for i in 0..queries.rows() {
        scratch.clear();
        scratch.extend((0..reference.rows()).map(|j| (euclidean(queries.row(i), reference.row(j)), j)));
        let (idx, dist) = nearest(&mut scratch, k);
        indices.push(idx);
        distances.push(dist);
    }
    Ok(KnnGraph { indices, distances })
}

fn nearest(candidates: &mut [(f64, usize)], k: usize) -> (Vec<usize>, Vec<f64>) {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
    }
    let top = &mut candidates[..k];
    top.sort_by(cmp);
    (top.iter().map(|c| c.1).collect(), top.iter().map(|c| c.0).collect())
}

/// Symmetrised fuzzy neighbourhood graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Rows whose bisection missed the tolerance and took the fallback sigma.
    pub sigma_fallbacks: Vec<usize>,
}

/// `sum_j exp(-max(0, d_j - rho) / sigma)`.
pub fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|&d| libm::exp(-(d - rho).max(0.0) / sigma)).sum()
}

/// Bisection for `sigma` with `membership_sum = log2(k)`. Returns the sigma
/// and whether the tolerance was met.
fn solve_sigma(distances: &[f64], rho: f64, target: f64) -> (f64, bool) {
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let s = membership_sum(distances, rho, mid);
        if (s - target).abs() < 1e-9 {
            break;
        }
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    let ok = mid > 0.0 && (membership_sum(distances, rho, mid) - target).abs() <= SIGMA_TOLERANCE;
    (mid, ok)
}

pub fn fuzzy_graph(knn: &KnnGraph) -> FuzzyGraph {
    let n = knn.indices.len();
    let k = knn.indices.first().map_or(0, Vec::len);
    let target = libm::log2(k as f64);
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut fallbacks = Vec::new();
    for (i, d) in knn.distances.iter().enumerate() {
        let r = d.first().copied().unwrap_or(0.0);
        let (mut s, ok) = solve_sigma(d, r, target);
        if !ok {
            let mean = d.iter().sum::<f64>() / d.len().max(1) as f64;
            s = if mean > 0.0 { mean } else { 1.0 };
            fallbacks.push(i);
        }
        rho.push(r);
        sigma.push(s);
    }

    let mut directed: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for i in 0..n {
        for (&j, &d) in knn.indices[i].iter().zip(&knn.distances[i]) {
            let w = libm::exp(-(d - rho[i]).max(0.0) / sigma[i]);
            let key = (i.min(j), i.max(j));
            let slot = directed.entry(key).or_insert((0.0, 0.0));
            if i < j {
                slot.0 = w;
            } else {
                slot.1 = w;
            }
        }
    }
    let edges = directed
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, a + b - a * b))
        .filter(|e| e.2 > 0.0)
        .collect();
    FuzzyGraph { edges, rho, sigma, sigma_fallbacks: fallbacks }
}

/// Least-squares fit of `1 / (1 + a x^{2b})` to the target curve that is 1
/// below `min_dist` and `exp(-(x - min_dist) / spread)` beyond, on 300
/// points of `[0, 3 spread]` (Levenberg-Marquardt).
pub fn fit_ab(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * SPREAD * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { libm::exp(-(x - min_dist) / SPREAD) })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * libm::pow(x, 2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut mu = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = if x > 0.0 { libm::pow(x, 2.0 * b) } else { 0.0 };
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let da = -p / (denom * denom);
            let db = if x > 0.0 { -a * p * 2.0 * libm::log(x) / (denom * denom) } else { 0.0 };
            let r = f - y;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let (m00, m11) = (jaa * (1.0 + mu), jbb * (1.0 + mu));
        let det = m00 * m11 - jab * jab;
        if det == 0.0 {
            break;
        }
        let step_a = -(m11 * ga - jab * gb) / det;
        let step_b = -(m00 * gb - jab * ga) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let new_cost = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
        if new_cost < cost {
            let done = (cost - new_cost) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = new_cost;
            mu = (mu / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// Two-dimensional coordinates plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub coords: Matrix,
    pub config: UmapConfig,
    pub fitted_rows: usize,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub sigma_fallbacks: Vec<usize>,
}

/// Seeded uniform initialisation in `[-10, 10]^2`.
fn initial_layout(n: usize, seed: u64) -> Matrix {
    let mut rng = rng(seed);
    let data = (0..2 * n).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
    Matrix::new(n, 2, data)
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

pub fn fit_embedding(points: &Matrix, config: &UmapConfig) -> Result<Embedding2D> {
    let n = points.rows();
    config.validate(n)?;
    let knn = knn_graph(points, config.n_neighbors)?;
    let graph = fuzzy_graph(&knn);
    let (a, b) = fit_ab(config.min_dist);
    let mut coords = initial_layout(n, config.seed);
    optimize_layout(&mut coords, &graph, a, b, config);
    Ok(Embedding2D {
        coords,
        config: config.clone(),
        fitted_rows: n,
        a,
        b,
        sigma_fallbacks: graph.sigma_fallbacks,
    })
}

fn optimize_layout(coords: &mut Matrix, graph: &FuzzyGraph, a: f64, b: f64, config: &UmapConfig) {
    let n_epochs = config.n_epochs;
    if n_epochs == 0 || graph.edges.is_empty() {
        return;
    }
    let n = coords.rows();
    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    // both directions of every edge, in (head, tail) order
    let mut directed: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * graph.edges.len());
    for &(i, j, w) in &graph.edges {
        if w >= max_w / n_epochs as f64 {
            directed.push((i, j, w));
            directed.push((j, i, w));
        }
    }
    directed.sort_by_key(|x| (x.0, x.1));
    let epochs_per_sample: Vec<f64> = directed.iter().map(|e| max_w / e.2).collect();
    let neg_rate = config.negative_sample_rate.max(1) as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();
    let mut rng = rng(crate::seed::derive_seed(config.seed, 1));

    for epoch in 0..n_epochs {
        let alpha = 1.0 - epoch as f64 / n_epochs as f64;
        let e = epoch as f64;
        for (edge, &(head, tail, _)) in directed.iter().enumerate() {
            if next_sample[edge] > e {
                continue;
            }
            let (cx, cy) = (coords.get(head, 0), coords.get(head, 1));
            let (ox, oy) = (coords.get(tail, 0), coords.get(tail, 1));
            let dist2 = (cx - ox) * (cx - ox) + (cy - oy) * (cy - oy);
            let coeff = if dist2 > 0.0 {
                -2.0 * a * b * libm::pow(dist2, b - 1.0) / (a * libm::pow(dist2, b) + 1.0)
            } else {
                0.0
            };
            let gx = clip(coeff * (cx - ox)) * alpha;
            let gy = clip(coeff * (cy - oy)) * alpha;
            coords.set(head, 0, cx + gx);
            coords.set(head, 1, cy + gy);
            coords.set(tail, 0, ox - gx);
            coords.set(tail, 1, oy - gy);
            next_sample[edge] += epochs_per_sample[edge];

            let n_neg = libm::floor((e - next_negative[edge]) / epochs_per_negative[edge]).max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.gen_range(0..n);
                if other == head {
                    continue;
                }
                let (cx, cy) = (coords.get(head, 0), coords.get(head, 1));
                let (ox, oy) = (coords.get(other, 0), coords.get(other, 1));
                let dist2 = (cx - ox) * (cx - ox) + (cy - oy) * (cy - oy);
                let (gx, gy) = if dist2 > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + dist2) * (a * libm::pow(dist2, b) + 1.0));
                    (clip(coeff * (cx - ox)), clip(coeff * (cy - oy)))
                } else {
                    (GRAD_CLIP, GRAD_CLIP)
                };
                coords.set(head, 0, cx + gx * alpha);
                coords.set(head, 1, cy + gy * alpha);
            }
            next_negative[edge] += n_neg as f64 * epochs_per_negative[edge];
        }
    }
}

/// Places each new point at the `1 / (d + 1e-12)`-weighted mean of the
/// coordinates of its `k` nearest training points.
pub fn transform_embedding(
    train_points: &Matrix,
    fitted: &Embedding2D,
    new_points: &Matrix,
    k: usize,
) -> Result<Embedding2D> {
    if train_points.rows() != fitted.coords.rows() {
        return Err(Error::Shape { expected: fitted.coords.rows(), got: train_points.rows() });
    }
    let knn = knn_query(train_points, new_points, k)?;
    let mut coords = Matrix::zeros(new_points.rows(), 2);
    for i in 0..new_points.rows() {
        let (mut x, mut y, mut total) = (0.0, 0.0, 0.0);
        for (&j, &d) in knn.indices[i].iter().zip(&knn.distances[i]) {
            let w = 1.0 / (d + TRANSFORM_EPS);
            x += w * fitted.coords.get(j, 0);
            y += w * fitted.coords.get(j, 1);
            total += w;
        }
        coords.set(i, 0, x / total);
        coords.set(i, 1, y / total);
    }
    Ok(Embedding2D {
        coords,
        config: fitted.config.clone(),
        fitted_rows: fitted.fitted_rows,
        a: fitted.a,
        b: fitted.b,
        sigma_fallbacks: Vec::new(),
    })
}
