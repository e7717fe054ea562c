//! Cluster-combination subgroups: enumeration, evaluation of the global
//! model per combination, zero-or-two selection, retraining and serving.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attribution::tree_shap;
use crate::clustering::ClusterAssignment;
use crate::gbdt::{predict_proba, tune_and_fit, Hyperparams, TreeEnsemble, TuningRecord};
use crate::stats::{auprc, bootstrap_metrics, log_loss, top_features, FeatureRanking, Metric, MetricSamples};
use crate::table::Matrix;
use crate::{Error, Result};

/// Largest label universe accepted by [`enumerate_labels`].
pub const MAX_LABELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    /// Sorted, non-empty cluster labels (`-1` is noise).
    pub labels: Vec<i64>,
    pub name: String,
}

impl SubgroupSpec {
    pub fn new(labels: Vec<i64>, name: impl Into<String>) -> Result<Self> {
        let mut labels = labels;
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            return Err(Error::Validation("a subgroup needs at least one label".into()));
        }
        Ok(SubgroupSpec { labels, name: name.into() })
    }

    pub fn contains(&self, label: i64) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn is_disjoint(&self, other: &SubgroupSpec) -> bool {
        !self.labels.iter().any(|&l| other.contains(l))
    }

    /// Row indices whose label belongs to the spec.
    pub fn rows(&self, assignment: &ClusterAssignment) -> Vec<usize> {
        (0..assignment.len()).filter(|&i| self.contains(assignment.labels[i])).collect()
    }
}

/// All non-empty subsets of `universe`, by size then lexicographically.
pub fn enumerate_labels(universe: &[i64]) -> Result<Vec<SubgroupSpec>> {
    let mut labels = universe.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.is_empty() {
        return Err(Error::Enumeration("no labels to combine".into()));
    }
    if labels.len() > MAX_LABELS {
        return Err(Error::Enumeration(format!("{} labels exceed the limit of {MAX_LABELS}", labels.len())));
    }
    let m = labels.len();
    let mut subsets: Vec<Vec<i64>> = (1u32..(1 << m))
        .map(|mask| (0..m).filter(|&b| mask & (1 << b) != 0).map(|b| labels[b]).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(subsets
        .into_iter()
        .enumerate()
        .map(|(i, labels)| SubgroupSpec { labels, name: format!("combo-{i}") })
        .collect())
}

/// Non-empty combinations of clusters `0..m`, plus noise when requested.
pub fn enumerate_subgroups(m: usize, include_noise: bool) -> Result<Vec<SubgroupSpec>> {
    let mut universe: Vec<i64> = (0..m as i64).collect();
    if include_noise {
        universe.push(-1);
    }
    enumerate_labels(&universe)
}

/// Point metrics and bootstrap distributions of one model on one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEvaluation {
    pub n_rows: usize,
    pub n_positives: usize,
    /// False when the slice lacks one of the classes.
    pub evaluable: bool,
    pub auprc: Option<f64>,
    pub log_loss: Option<f64>,
    pub bootstrap_auprc: Option<MetricSamples>,
    pub bootstrap_log_loss: Option<MetricSamples>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub seed: u64,
}

pub fn evaluate_slice(y: &[u8], p: &[f64], boot: BootstrapSettings) -> Result<SliceEvaluation> {
    let n_positives = y.iter().filter(|&&v| v == 1).count();
    let evaluable = n_positives > 0 && n_positives < y.len();
    if !evaluable {
        return Ok(SliceEvaluation {
            n_rows: y.len(),
            n_positives,
            evaluable,
            auprc: None,
            log_loss: None,
            bootstrap_auprc: None,
            bootstrap_log_loss: None,
        });
    }
    let mut samples = bootstrap_metrics(y, p, boot.replicates, boot.seed, &[Metric::Auprc, Metric::LogLoss])?;
    let bl = samples.pop();
    let ba = samples.pop();
    Ok(SliceEvaluation {
        n_rows: y.len(),
        n_positives,
        evaluable,
        auprc: Some(auprc(y, p)?),
        log_loss: Some(log_loss(y, p)?),
        bootstrap_auprc: ba,
        bootstrap_log_loss: bl,
    })
}

impl SliceEvaluation {
    pub fn median_auprc(&self) -> Option<f64> {
        self.bootstrap_auprc.as_ref().map(|s| s.median)
    }
}

/// Global-model evaluation on each spec's test slice, in spec order.
pub fn evaluate_combinations(
    test_y: &[u8],
    test_p: &[f64],
    test_labels: &ClusterAssignment,
    specs: &[SubgroupSpec],
    boot: BootstrapSettings,
) -> Result<Vec<SliceEvaluation>> {
    if test_y.len() != test_labels.len() || test_p.len() != test_labels.len() {
        return Err(Error::Shape { expected: test_labels.len(), got: test_y.len() });
    }
    specs
        .iter()
        .map(|spec| {
            let rows = spec.rows(test_labels);
            let y: Vec<u8> = rows.iter().map(|&i| test_y[i]).collect();
            let p: Vec<f64> = rows.iter().map(|&i| test_p[i]).collect();
            evaluate_slice(&y, &p, boot)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionCriteria {
    pub min_train_rows: usize,
    pub min_test_rows: usize,
    pub min_train_positives: usize,
    pub require_partition: bool,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria { min_train_rows: 100, min_test_rows: 30, min_train_positives: 5, require_partition: true }
    }
}

impl SelectionCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.min_train_rows == 0 || self.min_test_rows == 0 || self.min_train_positives == 0 {
            return Err(Error::Config("selection thresholds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row and positive counts of one cluster label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterCounts {
    pub train_rows: usize,
    pub train_positives: usize,
    pub test_rows: usize,
}

pub fn cluster_counts(
    train_labels: &ClusterAssignment,
    train_y: &[u8],
    test_labels: &ClusterAssignment,
) -> BTreeMap<i64, ClusterCounts> {
    let mut out: BTreeMap<i64, ClusterCounts> = BTreeMap::new();
    for l in train_labels.label_universe() {
        out.insert(l, ClusterCounts::default());
    }
    for (&l, &y) in train_labels.labels.iter().zip(train_y) {
        let c = out.entry(l).or_default();
        c.train_rows += 1;
        c.train_positives += usize::from(y);
    }
    for &l in &test_labels.labels {
        out.entry(l).or_default().test_rows += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    pub a: SubgroupSpec,
    pub b: SubgroupSpec,
    pub median_auprc_a: f64,
    pub median_auprc_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// `None` is the zero-subgroup outcome.
    pub pair: Option<SelectedPair>,
    pub candidates: usize,
}

impl Selection {
    pub fn count(&self) -> usize {
        if self.pair.is_some() {
            2
        } else {
            0
        }
    }
}

/// Picks the qualifying pair with the largest gap in median bootstrap AUPRC
/// of the global model. Pairs are complementary 2-partitions of `universe`
/// under `require_partition`, otherwise any two disjoint specs. Earlier pairs
/// win ties; the higher-AUPRC side becomes A.
pub fn select_subgroups(
    universe: &[i64],
    counts: &BTreeMap<i64, ClusterCounts>,
    specs: &[SubgroupSpec],
    metrics: &[SliceEvaluation],
    criteria: &SelectionCriteria,
) -> Result<Selection> {
    criteria.validate()?;
    if specs.len() != metrics.len() {
        return Err(Error::Shape { expected: specs.len(), got: metrics.len() });
    }
    let mut full: Vec<i64> = universe.to_vec();
    full.sort_unstable();
    full.dedup();
    let eligible: Vec<Option<f64>> = specs
        .iter()
        .zip(metrics)
        .map(|(s, m)| {
            let mut c = ClusterCounts::default();
            for l in &s.labels {
                let x = counts.get(l).copied().unwrap_or_default();
                c.train_rows += x.train_rows;
                c.train_positives += x.train_positives;
                c.test_rows += x.test_rows;
            }
            let ok = c.train_rows >= criteria.min_train_rows
                && c.test_rows >= criteria.min_test_rows
                && c.train_positives >= criteria.min_train_positives
                && s.labels.iter().all(|l| full.contains(l));
            if ok {
                m.median_auprc()
            } else {
                None
            }
        })
        .collect();

    let mut best: Option<(f64, usize, usize)> = None;
    let mut candidates = 0;
    for i in 0..specs.len() {
        for j in i + 1..specs.len() {
            if !specs[i].is_disjoint(&specs[j]) {
                continue;
            }
            if criteria.require_partition && specs[i].labels.len() + specs[j].labels.len() != full.len() {
                continue;
            }
            let (Some(ai), Some(aj)) = (eligible[i], eligible[j]) else { continue };
            candidates += 1;
            let gap = (ai - aj).abs();
            if best.is_none_or(|(g, _, _)| gap > g) {
                best = Some((gap, i, j));
            }
        }
    }
    let pair = best.map(|(_, i, j)| {
        let (ai, aj) = (eligible[i].unwrap_or(0.0), eligible[j].unwrap_or(0.0));
        let (a, b, ma, mb) = if aj > ai { (j, i, aj, ai) } else { (i, j, ai, aj) };
        SelectedPair {
            a: SubgroupSpec { labels: specs[a].labels.clone(), name: "A".to_string() },
            b: SubgroupSpec { labels: specs[b].labels.clone(), name: "B".to_string() },
            median_auprc_a: ma,
            median_auprc_b: mb,
        }
    });
    Ok(Selection { pair, candidates })
}

/// Rows of one split together with their cluster labels and stable ids.
#[derive(Debug, Clone, Copy)]
pub struct SplitView<'a> {
    pub x: &'a Matrix,
    pub y: &'a [u8],
    pub labels: &'a ClusterAssignment,
    pub row_ids: &'a [u64],
}

#[derive(Debug, Clone, Copy)]
pub struct RetrainSettings<'a> {
    pub grid: &'a [Hyperparams],
    pub seed: u64,
    pub bootstrap: BootstrapSettings,
    pub feature_names: &'a [String],
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Retrained,
    /// Retraining failed; requests for this subgroup fall back to the global model.
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRun {
    pub spec: SubgroupSpec,
    pub status: RunStatus,
    /// `None` means the global model serves this subgroup.
    pub model: Option<TreeEnsemble>,
    pub tuning: Option<TuningRecord>,
    pub train_row_ids: Vec<u64>,
    pub test_row_ids: Vec<u64>,
    /// Retrained model on the spec's test slice.
    pub evaluation: Option<SliceEvaluation>,
    pub test_probabilities: Vec<f64>,
    pub test_shap: Option<Matrix>,
    pub ranking: Option<FeatureRanking>,
}

impl SubgroupRun {
    pub fn retrained(&self) -> bool {
        self.status == RunStatus::Retrained
    }
}

/// Tunes and fits on the spec's train slice only, then evaluates and
/// recomputes attributions on its test slice. Failures are recorded on the
/// run instead of propagated.
pub fn retrain_subgroup(
    train: SplitView<'_>,
    test: SplitView<'_>,
    spec: &SubgroupSpec,
    settings: RetrainSettings<'_>,
) -> SubgroupRun {
    let train_rows = spec.rows(train.labels);
    let test_rows = spec.rows(test.labels);
    let mut run = SubgroupRun {
        spec: spec.clone(),
        status: RunStatus::Retrained,
        model: None,
        tuning: None,
        train_row_ids: train_rows.iter().map(|&i| train.row_ids[i]).collect(),
        test_row_ids: test_rows.iter().map(|&i| test.row_ids[i]).collect(),
        evaluation: None,
        test_probabilities: Vec::new(),
        test_shap: None,
        ranking: None,
    };
    let outcome = (|| -> Result<()> {
        let x = train.x.select_rows(&train_rows);
        let y: Vec<u8> = train_rows.iter().map(|&i| train.y[i]).collect();
        let tuned = tune_and_fit(&x, &y, settings.grid, settings.seed)?;
        let tx = test.x.select_rows(&test_rows);
        let ty: Vec<u8> = test_rows.iter().map(|&i| test.y[i]).collect();
        let p = predict_proba(&tuned.model, &tx)?;
        let evaluation = evaluate_slice(&ty, &p, settings.bootstrap)?;
        let shap = tree_shap(&tuned.model, &tx, settings.feature_names)?;
        run.ranking = Some(top_features(&shap, settings.top_k));
        run.test_shap = Some(shap.values);
        run.evaluation = Some(evaluation);
        run.test_probabilities = p;
        run.tuning = Some(tuned.record);
        run.model = Some(tuned.model);
        Ok(())
    })();
    if let Err(e) = outcome {
        run.status = RunStatus::Failed { reason: e.to_string() };
        run.model = None;
        run.tuning = None;
        run.evaluation = None;
        run.test_probabilities.clear();
        run.test_shap = None;
        run.ranking = None;
    }
    run
}
