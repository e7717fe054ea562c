//! End-to-end orchestration over an in-memory cohort.
//!
//! Stages run in a fixed order and each one is a function of the earlier
//! outputs plus a seed derived from the root seed, so a caller can persist
//! stage outputs as they complete and stop at the first failure.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attribution::{standardize_apply, standardize_fit, standardize_row, tree_shap, ShapMatrix, StandardizationStats};
use crate::clustering::{hdbscan, knn_propagate, ClusterAssignment, HdbscanConfig, PropagationConfig};
use crate::embedding::{fit_embedding, knn_query, transform_embedding, Embedding2D, UmapConfig};
use crate::gbdt::{default_grid, predict_proba, stump_grid, tune_and_fit, Hyperparams, TreeEnsemble, Tuned};
use crate::math::sigmoid;
use crate::preprocess::{preprocess, PreprocessConfig, Preprocessed};
use crate::seed::{derive_seed, stream};
use crate::stats::{mann_whitney_u, rank_compare, top_features_of, ComparisonResult, FeatureRanking, RankComparison};
use crate::subgroups::{
    cluster_counts, enumerate_labels, evaluate_combinations, evaluate_slice, retrain_subgroup, select_subgroups,
    BootstrapSettings, ClusterCounts, RetrainSettings, Selection, SelectionCriteria, SliceEvaluation, SplitView,
    SubgroupRun, SubgroupSpec,
};
use crate::table::{FeatureTable, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub grid: Vec<Hyperparams>,
    pub umap: UmapConfig,
    pub hdbscan: HdbscanConfig,
    pub propagation: PropagationConfig,
    pub selection: SelectionCriteria,
    pub bootstrap_replicates: usize,
    pub top_k: usize,
    /// Root seed; the per-stage seeds inside `preprocess` and `umap` are
    /// overwritten with values derived from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            grid: default_grid(),
            umap: UmapConfig::default(),
            hdbscan: HdbscanConfig::default(),
            propagation: PropagationConfig::default(),
            selection: SelectionCriteria::default(),
            bootstrap_replicates: 200,
            top_k: 5,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Settings for cohorts from [`crate::synthetic::SyntheticSpec::two_mechanism`]:
    /// additive stumps and coarse density clustering.
    pub fn planted_benchmark(seed: u64) -> PipelineConfig {
        PipelineConfig {
            grid: stump_grid(),
            hdbscan: HdbscanConfig { min_cluster_size: 300, min_samples: Some(50) },
            seed,
            ..PipelineConfig::default()
        }
    }

    /// Copy with stage seeds derived from the root seed.
    pub fn resolved(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.preprocess.seed = derive_seed(self.seed, stream::SPLIT);
        c.umap.seed = derive_seed(self.seed, stream::EMBEDDING);
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        if self.grid.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        for hp in &self.grid {
            hp.validate()?;
        }
        self.hdbscan.validate()?;
        self.selection.validate()?;
        if self.propagation.k == 0 {
            return Err(Error::Config("propagation k must be at least 1".into()));
        }
        if self.bootstrap_replicates == 0 {
            return Err(Error::Config("bootstrap_replicates must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(self.umap.min_dist > 0.0) || self.umap.n_neighbors < 2 {
            return Err(Error::Config("umap needs n_neighbors >= 2 and min_dist > 0".into()));
        }
        Ok(())
    }

    fn bootstrap(&self) -> BootstrapSettings {
        BootstrapSettings { replicates: self.bootstrap_replicates, seed: derive_seed(self.seed, stream::BOOTSTRAP) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocess,
    GlobalModel,
    Attribution,
    Embedding,
    Clustering,
    Subgroups,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::GlobalModel => "global_model",
            Stage::Attribution => "attribution",
            Stage::Embedding => "embedding",
            Stage::Clustering => "clustering",
            Stage::Subgroups => "subgroups",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
}

impl core::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage.name(), self.error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStage {
    pub feature_names: Vec<String>,
    pub x_train: Matrix,
    pub x_test: Matrix,
    pub tuned: Tuned,
    pub train_probabilities: Vec<f64>,
    pub test_probabilities: Vec<f64>,
}

pub fn run_global(pre: &Preprocessed, cfg: &PipelineConfig) -> Result<GlobalStage> {
    let x_train = pre.train.feature_matrix()?;
    let x_test = pre.test.feature_matrix()?;
    let tuned = tune_and_fit(&x_train, pre.train.target(), &cfg.grid, derive_seed(cfg.seed, stream::GLOBAL_TUNE))?;
    let train_probabilities = predict_proba(&tuned.model, &x_train)?;
    let test_probabilities = predict_proba(&tuned.model, &x_test)?;
    Ok(GlobalStage {
        feature_names: pre.train.feature_names(),
        x_train,
        x_test,
        tuned,
        train_probabilities,
        test_probabilities,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionStage {
    pub train_shap: ShapMatrix,
    pub test_shap: ShapMatrix,
    pub standardization: StandardizationStats,
    pub train_points: Matrix,
    pub test_points: Matrix,
}

pub fn run_attribution(global: &GlobalStage) -> Result<AttributionStage> {
    let model = &global.tuned.model;
    let train_shap = tree_shap(model, &global.x_train, &global.feature_names)?;
    let test_shap = tree_shap(model, &global.x_test, &global.feature_names)?;
    let standardization = standardize_fit(&train_shap.values)?;
    let train_points = standardize_apply(&train_shap.values, &standardization)?;
    let test_points = standardize_apply(&test_shap.values, &standardization)?;
    Ok(AttributionStage { train_shap, test_shap, standardization, train_points, test_points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStage {
    pub train: Embedding2D,
    pub test: Embedding2D,
}

/// Test rows are placed with `k = n_neighbors`.
pub fn run_embedding(attr: &AttributionStage, cfg: &PipelineConfig) -> Result<EmbeddingStage> {
    let train = fit_embedding(&attr.train_points, &cfg.umap)?;
    let test = transform_embedding(&attr.train_points, &train, &attr.test_points, cfg.umap.n_neighbors)?;
    Ok(EmbeddingStage { train, test })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringStage {
    pub train: ClusterAssignment,
    pub test: ClusterAssignment,
}

pub fn run_clustering(emb: &EmbeddingStage, cfg: &PipelineConfig) -> Result<ClusteringStage> {
    let train = hdbscan(&emb.train.coords, &cfg.hdbscan)?;
    let test = knn_propagate(&emb.train.coords, &train, &emb.test.coords, &cfg.propagation)?;
    Ok(ClusteringStage { train, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedComparison {
    pub name: String,
    pub first: String,
    pub second: String,
    pub first_median_auprc: f64,
    pub second_median_auprc: f64,
    pub result: ComparisonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRanking {
    /// `"global"` or the retrained subgroup's name.
    pub model: String,
    /// `"All"` or a subgroup name.
    pub slice: String,
    pub ranking: FeatureRanking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRankComparison {
    pub first: String,
    pub second: String,
    pub comparison: RankComparison,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupStage {
    pub universe: Vec<i64>,
    pub specs: Vec<SubgroupSpec>,
    pub evaluations: Vec<SliceEvaluation>,
    pub counts: BTreeMap<i64, ClusterCounts>,
    pub global_all: SliceEvaluation,
    pub selection: Selection,
    pub runs: Vec<SubgroupRun>,
    pub comparisons: Vec<NamedComparison>,
    pub rankings: Vec<NamedRanking>,
    pub rank_comparisons: Vec<NamedRankComparison>,
}

impl SubgroupStage {
    pub fn evaluation_of(&self, spec: &SubgroupSpec) -> Option<&SliceEvaluation> {
        self.specs.iter().position(|s| s.labels == spec.labels).map(|i| &self.evaluations[i])
    }

    pub fn run(&self, name: &str) -> Option<&SubgroupRun> {
        self.runs.iter().find(|r| r.spec.name == name)
    }

    pub fn comparison(&self, name: &str) -> Option<&NamedComparison> {
        self.comparisons.iter().find(|c| c.name == name)
    }
}

fn compare(name: &str, first: (&str, &SliceEvaluation), second: (&str, &SliceEvaluation)) -> Option<NamedComparison> {
    let a = first.1.bootstrap_auprc.as_ref()?;
    let b = second.1.bootstrap_auprc.as_ref()?;
    if a.replicates.is_empty() || b.replicates.is_empty() {
        return None;
    }
    Some(NamedComparison {
        name: name.to_string(),
        first: first.0.to_string(),
        second: second.0.to_string(),
        first_median_auprc: a.median,
        second_median_auprc: b.median,
        result: mann_whitney_u(&a.replicates, &b.replicates),
    })
}

pub fn run_subgroups(
    pre: &Preprocessed,
    global: &GlobalStage,
    attr: &AttributionStage,
    clusters: &ClusteringStage,
    cfg: &PipelineConfig,
) -> Result<SubgroupStage> {
    let boot = cfg.bootstrap();
    let test_y = pre.test.target();
    let universe = clusters.train.label_universe();
    let specs = enumerate_labels(&universe)?;
    let evaluations = evaluate_combinations(test_y, &global.test_probabilities, &clusters.test, &specs, boot)?;
    let counts = cluster_counts(&clusters.train, pre.train.target(), &clusters.test);
    let global_all = evaluate_slice(test_y, &global.test_probabilities, boot)?;
    let selection = select_subgroups(&universe, &counts, &specs, &evaluations, &cfg.selection)?;

    let mut stage = SubgroupStage {
        universe,
        specs,
        evaluations,
        counts,
        global_all,
        selection,
        runs: Vec::new(),
        comparisons: Vec::new(),
        rankings: Vec::new(),
        rank_comparisons: Vec::new(),
    };
    let names = &global.feature_names;
    stage.rankings.push(NamedRanking {
        model: "global".into(),
        slice: "All".into(),
        ranking: top_features_of(&attr.test_shap.values, names, cfg.top_k),
    });
    let Some(pair) = stage.selection.pair.clone() else {
        return Ok(stage);
    };

    let train_view = SplitView {
        x: &global.x_train,
        y: pre.train.target(),
        labels: &clusters.train,
        row_ids: pre.train.row_ids(),
    };
    let test_view = SplitView { x: &global.x_test, y: test_y, labels: &clusters.test, row_ids: pre.test.row_ids() };
    for (spec, tune_stream) in [(&pair.a, stream::SUBGROUP_A), (&pair.b, stream::SUBGROUP_B)] {
        let settings = RetrainSettings {
            grid: &cfg.grid,
            seed: derive_seed(cfg.seed, tune_stream),
            bootstrap: boot,
            feature_names: names,
            top_k: cfg.top_k,
        };
        stage.runs.push(retrain_subgroup(train_view, test_view, spec, settings));
    }

    let mut comparisons = Vec::new();
    let mut rankings = Vec::new();
    let mut rank_comparisons = Vec::new();
    for run in &stage.runs {
        let name = run.spec.name.as_str();
        let Some(global_on) = stage.evaluation_of(&run.spec) else { continue };
        if let Some(c) = compare(&format!("All vs {name}"), ("All", &stage.global_all), (name, global_on)) {
            comparisons.push(c);
        }
        let rows = run.spec.rows(&clusters.test);
        let global_ranking = top_features_of(&attr.test_shap.values.select_rows(&rows), names, cfg.top_k);
        rankings.push(NamedRanking { model: "global".into(), slice: name.into(), ranking: global_ranking.clone() });
        if let (Some(eval), Some(ranking)) = (&run.evaluation, &run.ranking) {
            let retrained = format!("{name}-retrained");
            if let Some(c) = compare(&format!("{name} vs {retrained}"), (name, global_on), (&retrained, eval)) {
                comparisons.push(c);
            }
            rankings.push(NamedRanking { model: retrained.clone(), slice: name.into(), ranking: ranking.clone() });
            rank_comparisons.push(NamedRankComparison {
                first: format!("global@{name}"),
                second: format!("{retrained}@{name}"),
                comparison: rank_compare(&global_ranking, ranking),
            });
        }
    }
    // the two "All vs" rows first, then the retrained comparisons
    comparisons.sort_by_key(|c| !c.name.starts_with("All"));
    let global_rank = |slice: &str| rankings.iter().find(|r: &&NamedRanking| r.model == "global" && r.slice == slice);
    if let (Some(a), Some(b)) = (global_rank("A"), global_rank("B")) {
        rank_comparisons.push(NamedRankComparison {
            first: "global@A".into(),
            second: "global@B".into(),
            comparison: rank_compare(&a.ranking, &b.ranking),
        });
    }
    stage.comparisons = comparisons;
    stage.rankings.extend(rankings);
    stage.rank_comparisons = rank_comparisons;
    Ok(stage)
}

/// Borrowed view of a stage output handed to the observer.
#[derive(Debug, Clone, Copy)]
pub enum StageOutput<'a> {
    Preprocess(&'a Preprocessed),
    GlobalModel(&'a GlobalStage),
    Attribution(&'a AttributionStage),
    Embedding(&'a EmbeddingStage),
    Clustering(&'a ClusteringStage),
    Subgroups(&'a SubgroupStage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub config: PipelineConfig,
    pub preprocessed: Preprocessed,
    pub global: GlobalStage,
    pub attribution: AttributionStage,
    pub embedding: EmbeddingStage,
    pub clustering: ClusteringStage,
    pub subgroups: SubgroupStage,
}

/// Runs every stage; `observer` sees each output as soon as it exists and
/// may abort the run by returning an error (attributed to that stage).
pub fn run_pipeline(
    raw: &FeatureTable,
    config: &PipelineConfig,
    observer: &mut dyn FnMut(StageOutput<'_>) -> Result<()>,
) -> core::result::Result<PipelineOutput, StageFailure> {
    let fail = |stage: Stage| move |error: Error| StageFailure { stage, error };
    config.validate().map_err(fail(Stage::Preprocess))?;
    let cfg = config.resolved();

    let pre = preprocess(raw, &cfg.preprocess).map_err(fail(Stage::Preprocess))?;
    observer(StageOutput::Preprocess(&pre)).map_err(fail(Stage::Preprocess))?;
    let global = run_global(&pre, &cfg).map_err(fail(Stage::GlobalModel))?;
    observer(StageOutput::GlobalModel(&global)).map_err(fail(Stage::GlobalModel))?;
    let attribution = run_attribution(&global).map_err(fail(Stage::Attribution))?;
    observer(StageOutput::Attribution(&attribution)).map_err(fail(Stage::Attribution))?;
    let embedding = run_embedding(&attribution, &cfg).map_err(fail(Stage::Embedding))?;
    observer(StageOutput::Embedding(&embedding)).map_err(fail(Stage::Embedding))?;
    let clustering = run_clustering(&embedding, &cfg).map_err(fail(Stage::Clustering))?;
    observer(StageOutput::Clustering(&clustering)).map_err(fail(Stage::Clustering))?;
    let subgroups = run_subgroups(&pre, &global, &attribution, &clustering, &cfg).map_err(fail(Stage::Subgroups))?;
    observer(StageOutput::Subgroups(&subgroups)).map_err(fail(Stage::Subgroups))?;

    Ok(PipelineOutput { config: cfg, preprocessed: pre, global, attribution, embedding, clustering, subgroups })
}

/// Spread of the serving model's performance on the slice it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub auprc_iqr: Option<f64>,
    pub median_auprc: Option<f64>,
    pub test_log_loss: Option<f64>,
}

impl Uncertainty {
    fn of(eval: &SliceEvaluation) -> Self {
        Uncertainty {
            auprc_iqr: eval.bootstrap_auprc.as_ref().map(|s| s.iqr),
            median_auprc: eval.median_auprc(),
            test_log_loss: eval.log_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServedSubgroup {
    pub spec: SubgroupSpec,
    /// `None` falls back to the global model.
    pub model: Option<TreeEnsemble>,
    pub uncertainty: Uncertainty,
}

/// Everything needed to score a new, already-preprocessed row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingArtifacts {
    pub feature_names: Vec<String>,
    pub global: TreeEnsemble,
    pub global_uncertainty: Uncertainty,
    pub standardization: StandardizationStats,
    pub train_points: Matrix,
    pub train_embedding: Embedding2D,
    pub transform_k: usize,
    pub train_labels: ClusterAssignment,
    pub propagation: PropagationConfig,
    pub subgroups: Vec<ServedSubgroup>,
}

impl ServingArtifacts {
    pub fn from_output(out: &PipelineOutput) -> Self {
        let sg = &out.subgroups;
        let subgroups = sg
            .runs
            .iter()
            .map(|run| {
                let (model, eval) = match (&run.model, &run.evaluation) {
                    (Some(m), Some(e)) => (Some(m.clone()), Some(e)),
                    _ => (None, sg.evaluation_of(&run.spec)),
                };
                let uncertainty = eval.map(Uncertainty::of).unwrap_or(Uncertainty {
                    auprc_iqr: None,
                    median_auprc: None,
                    test_log_loss: None,
                });
                ServedSubgroup { spec: run.spec.clone(), model, uncertainty }
            })
            .collect();
        ServingArtifacts {
            feature_names: out.global.feature_names.clone(),
            global: out.global.tuned.model.clone(),
            global_uncertainty: Uncertainty::of(&sg.global_all),
            standardization: out.attribution.standardization.clone(),
            train_points: out.attribution.train_points.clone(),
            train_embedding: out.embedding.train.clone(),
            transform_k: out.config.umap.n_neighbors,
            train_labels: out.clustering.train.clone(),
            propagation: out.config.propagation,
            subgroups,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Subgroup name, or `"none"` when no selected subgroup holds the row.
    pub subgroup: String,
    pub cluster: i64,
    pub cluster_strength: f64,
    /// `"global"` or the name of the retrained subgroup model.
    pub model: String,
    pub probability: f64,
    pub uncertainty: Uncertainty,
    pub embedding: [f64; 2],
}

/// Attribution under the global model, standardisation, embedding
/// placement, k-NN cluster assignment, then the subgroup's model if it has
/// one and the global model otherwise.
pub fn score_new_patient(art: &ServingArtifacts, x: &[f64]) -> Result<ScoreRecord> {
    if x.len() != art.feature_names.len() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema(format!(
            "expected {} finite feature values, got {}",
            art.feature_names.len(),
            x.len()
        )));
    }
    let row = Matrix::new(1, x.len(), x.to_vec());
    let shap = tree_shap(&art.global, &row, &art.feature_names)?;
    let point = standardize_row(shap.values.row(0), &art.standardization)?;
    let placed = transform_embedding(
        &art.train_points,
        &art.train_embedding,
        &Matrix::new(1, point.len(), point.clone()),
        art.transform_k.min(art.train_points.rows()),
    )?;
    // a row already present in the training attributions keeps its own label
    let nearest = knn_query(&art.train_points, &Matrix::new(1, point.len(), point.clone()), 1)?;
    let (cluster, cluster_strength) = if nearest.distances[0][0] == 0.0 {
        let i = nearest.indices[0][0];
        (art.train_labels.labels[i], art.train_labels.strength[i])
    } else {
        let assigned =
            knn_propagate(&art.train_embedding.coords, &art.train_labels, &placed.coords, &art.propagation)?;
        (assigned.labels[0], assigned.strength[0])
    };
    let served = art.subgroups.iter().find(|s| s.spec.contains(cluster));
    let (subgroup, model_name, model, uncertainty) = match served {
        Some(s) => match &s.model {
            Some(m) => (s.spec.name.clone(), format!("{}-retrained", s.spec.name), m, s.uncertainty.clone()),
            None => (s.spec.name.clone(), "global".to_string(), &art.global, s.uncertainty.clone()),
        },
        None => ("none".to_string(), "global".to_string(), &art.global, art.global_uncertainty.clone()),
    };
    Ok(ScoreRecord {
        subgroup,
        cluster,
        cluster_strength,
        model: model_name,
        probability: sigmoid(model.margin_row(x)),
        uncertainty,
        embedding: [placed.coords.get(0, 0), placed.coords.get(0, 1)],
    })
}
