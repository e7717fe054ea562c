//! HDBSCAN over embedding coordinates and k-NN label propagation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::knn_query;
use crate::math::euclidean;
use crate::table::Matrix;
use crate::{Error, Result};

pub const NOISE: i64 = -1;
const MIN_DISTANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanConfig {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    #[serde(default)]
    pub min_samples: Option<usize>,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        HdbscanConfig { min_cluster_size: 15, min_samples: None }
    }
}

impl HdbscanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Config("min_cluster_size must be at least 2".into()));
        }
        if self.min_samples == Some(0) {
            return Err(Error::Config("min_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    pub strength: Vec<f64>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_noise(&self) -> bool {
        self.labels.contains(&NOISE)
    }

    /// Clusters followed by noise when any row is noise.
    pub fn label_universe(&self) -> Vec<i64> {
        let mut out: Vec<i64> = (0..self.n_clusters as i64).collect();
        if self.has_noise() {
            out.insert(0, NOISE);
        }
        out
    }

    pub fn rows_in(&self, labels: &[i64]) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| labels.contains(&self.labels[i])).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.labels.len() != self.strength.len() {
            return Err(Error::Shape { expected: self.labels.len(), got: self.strength.len() });
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l < NOISE || l >= self.n_clusters as i64) {
            return Err(Error::Validation(format!("label {bad} outside -1..{}", self.n_clusters)));
        }
        Ok(())
    }
}

/// Prim's algorithm on a complete graph; returns `n - 1` edges `(u, v, w)`
/// in the order they were added. Equal keys resolve to the lower index.
pub fn prim_mst(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize, f64)> {
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut best = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = weight(current, v);
            if w < key[v] {
                key[v] = w;
                from[v] = current;
            }
            if best == usize::MAX || key[v] < key[best] {
                best = v;
            }
        }
        in_tree[best] = true;
        edges.push((from[best], best, key[best]));
        current = best;
    }
    edges
}

/// Distance to the `min_samples`-th nearest point, counting the point itself.
pub fn core_distances(points: &Matrix, min_samples: usize) -> Vec<f64> {
    let n = points.rows();
    let k = min_samples.clamp(1, n.max(1));
    let mut scratch = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            if k == 1 {
                return 0.0;
            }
            scratch.clear();
            scratch.extend((0..n).filter(|&j| j != i).map(|j| euclidean(points.row(i), points.row(j))));
            let (_, kth, _) = scratch.select_nth_unstable_by(k - 2, f64::total_cmp);
            *kth
        })
        .collect()
}

pub fn mutual_reachability_mst(points: &Matrix, min_samples: usize) -> Vec<(usize, usize, f64)> {
    let core = core_distances(points, min_samples);
    prim_mst(points.rows(), |a, b| euclidean(points.row(a), points.row(b)).max(core[a]).max(core[b]))
}

/// One agglomeration step: nodes below `n` are points, node `n + i` is merge `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Single-linkage dendrogram from MST edges (merged in ascending weight).
pub fn single_linkage(n: usize, mst: &[(usize, usize, f64)]) -> Vec<Merge> {
    let mut edges = mst.to_vec();
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (u, v, w) in edges {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            continue;
        }
        let id = n + merges.len();
        let (lu, lv) = (node_of[ru], node_of[rv]);
        let s = size[lu] + size[lv];
        merges.push(Merge { left: lu, right: lv, distance: w, size: s });
        size[id] = s;
        parent[rv] = ru;
        node_of[ru] = id;
    }
    merges
}

struct Condensed {
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    stability: Vec<f64>,
    point_cluster: Vec<usize>,
    point_lambda: Vec<f64>,
}

fn lambda(d: f64) -> f64 {
    1.0 / d.max(MIN_DISTANCE)
}

/// Condensed cluster tree. Merges at one height are treated as a single
/// multi-way split so equal distances never create spurious chains.
fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Condensed {
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves = |node: usize, out: &mut Vec<usize>| {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(merges[x - n].right);
                stack.push(merges[x - n].left);
            }
        }
    };
    let mut c = Condensed {
        parent: vec![None],
        birth: vec![0.0],
        stability: vec![0.0],
        point_cluster: vec![0; n],
        point_lambda: vec![0.0; n],
    };
    let root = n + merges.len() - 1;
    let mut work = vec![(0usize, root)];
    let mut components = Vec::new();
    let mut members = Vec::new();
    while let Some((cluster, start)) = work.pop() {
        let mut current = start;
        loop {
            let height = merges[current - n].distance;
            let lam = lambda(height);
            components.clear();
            let mut stack = vec![current];
            while let Some(x) = stack.pop() {
                if x >= n && merges[x - n].distance == height {
                    stack.push(merges[x - n].right);
                    stack.push(merges[x - n].left);
                } else {
                    components.push(x);
                }
            }
            let big: Vec<usize> = components.iter().copied().filter(|&x| size_of(x) >= min_cluster_size).collect();
            for &small in components.iter().filter(|&&x| size_of(x) < min_cluster_size) {
                members.clear();
                leaves(small, &mut members);
                for &p in &members {
                    c.point_cluster[p] = cluster;
                    c.point_lambda[p] = lam;
                }
                c.stability[cluster] += members.len() as f64 * (lam - c.birth[cluster]);
            }
            match big.len() {
                0 => break,
                1 => current = big[0],
                _ => {
                    for &b in big.iter().rev() {
                        let id = c.birth.len();
                        c.parent.push(Some(cluster));
                        c.birth.push(lam);
                        c.stability.push(0.0);
                        c.stability[cluster] += size_of(b) as f64 * (lam - c.birth[cluster]);
                        work.push((id, b));
                    }
                    break;
                }
            }
        }
    }
    c
}

/// Excess-of-mass selection below the root. With no child clusters the
/// root itself is the single cluster.
fn select_clusters(c: &Condensed) -> Vec<bool> {
    let m = c.birth.len();
    let mut selected = vec![false; m];
    if m == 1 {
        selected[0] = true;
        return selected;
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (id, p) in c.parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(id);
        }
    }
    let mut subtree = vec![0.0; m];
    for id in (1..m).rev() {
        let below: f64 = children[id].iter().map(|&ch| subtree[ch]).sum();
        if children[id].is_empty() || c.stability[id] >= below {
            subtree[id] = c.stability[id];
            selected[id] = true;
            let mut stack = children[id].clone();
            while let Some(x) = stack.pop() {
                selected[x] = false;
                stack.extend_from_slice(&children[x]);
            }
        } else {
            subtree[id] = below;
        }
    }
    selected
}

pub fn hdbscan(points: &Matrix, config: &HdbscanConfig) -> Result<ClusterAssignment> {
    config.validate()?;
    let n = points.rows();
    if n < 2 {
        return Err(Error::Validation(format!("hdbscan needs at least 2 points, got {n}")));
    }
    if n < config.min_cluster_size {
        return Ok(ClusterAssignment { labels: vec![NOISE; n], n_clusters: 0, strength: vec![0.0; n] });
    }
    let mst = mutual_reachability_mst(points, config.min_samples());
    let merges = single_linkage(n, &mst);
    let condensed = condense(n, &merges, config.min_cluster_size);
    let selected = select_clusters(&condensed);

    let mut raw = vec![usize::MAX; n];
    for p in 0..n {
        let mut node = Some(condensed.point_cluster[p]);
        while let Some(x) = node {
            if selected[x] {
                raw[p] = x;
                break;
            }
            node = condensed.parent[x];
        }
    }
    // canonical ids: clusters ordered by lowest member row
    let mut order: BTreeMap<usize, i64> = BTreeMap::new();
    let mut max_lambda: BTreeMap<usize, f64> = BTreeMap::new();
    for p in 0..n {
        if raw[p] != usize::MAX {
            let next = order.len() as i64;
            order.entry(raw[p]).or_insert(next);
            let entry = max_lambda.entry(raw[p]).or_insert(0.0);
            *entry = entry.max(condensed.point_lambda[p]);
        }
    }
    let mut labels = vec![NOISE; n];
    let mut strength = vec![0.0; n];
    for p in 0..n {
        if raw[p] != usize::MAX {
            labels[p] = order[&raw[p]];
            let top = max_lambda[&raw[p]];
            strength[p] = if top > 0.0 { (condensed.point_lambda[p] / top).min(1.0) } else { 1.0 };
        }
    }
    Ok(ClusterAssignment { labels, n_clusters: order.len(), strength })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub k: usize,
    /// Drop noise-labelled neighbours from the vote.
    #[serde(default)]
    pub exclude_noise_voters: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig { k: 5, exclude_noise_voters: false }
    }
}

/// Majority vote among the `k` nearest training points. Tied labels resolve
/// to the one whose closest voter is nearest; strength is the vote share.
pub fn knn_propagate(
    train_coords: &Matrix,
    train: &ClusterAssignment,
    test_coords: &Matrix,
    config: &PropagationConfig,
) -> Result<ClusterAssignment> {
    let n_train = train_coords.rows();
    if n_train == 0 || train.len() != n_train {
        return Err(Error::Shape { expected: n_train, got: train.len() });
    }
    if config.k == 0 || config.k > n_train {
        return Err(Error::Config(format!("propagation k = {} must lie in 1..={n_train}", config.k)));
    }
    let knn = knn_query(train_coords, test_coords, config.k)?;
    let mut labels = Vec::with_capacity(test_coords.rows());
    let mut strength = Vec::with_capacity(test_coords.rows());
    for neighbours in &knn.indices {
        // label -> (votes, rank of first voter)
        let mut tally: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
        let mut voters = 0;
        for (rank, &j) in neighbours.iter().enumerate() {
            let l = train.labels[j];
            if config.exclude_noise_voters && l == NOISE {
                continue;
            }
            voters += 1;
            tally.entry(l).or_insert((0, rank)).0 += 1;
        }
        match tally.iter().max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1))) {
            Some((&l, &(votes, _))) => {
                labels.push(l);
                strength.push(votes as f64 / voters as f64);
            }
            None => {
                labels.push(NOISE);
                strength.push(0.0);
            }
        }
    }
    Ok(ClusterAssignment { labels, n_clusters: train.n_clusters, strength })
}
