//! On-disk layout of a run:
//!
//! ```text
//! outdir/
//!   preprocess/  report.json transform.json schema.json rows.csv train.csv test.csv
//!   model/       global.json tuning.json predictions.csv serving.json
//!   shap/        train.csv test.csv attribution.json
//!   embedding/   coords.csv layout.json
//!   clusters/    assignments.csv summary.json
//!   subgroups/   evaluations.json selection.json comparisons.json rankings.json
//!                rank_comparisons.json {A,B}/{run.json,model.json,predictions.csv,shap_test.csv}
//!   report.json
//! ```
//!
//! Per-row files key rows by `(split, row_id)`; `preprocess/rows.csv` maps
//! them back to input rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shapgroups_core::clustering::ClusterAssignment;
use shapgroups_core::gbdt::{Hyperparams, TuningRecord};
use shapgroups_core::pipeline::{
    run_pipeline, NamedComparison, NamedRankComparison, NamedRanking, PipelineOutput, ServingArtifacts, Stage,
    StageOutput,
};
use shapgroups_core::preprocess::PreprocessReport;
use shapgroups_core::seed::{derive_seed, stream};
use shapgroups_core::stats::TestMethod;
use shapgroups_core::subgroups::{BootstrapSettings, Selection, SliceEvaluation, SubgroupRun, SubgroupSpec};
use shapgroups_core::table::Matrix;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{write_json, write_records, SchemaEntry};

pub const REPORT: &str = "report.json";
pub const STAGE_DIRS: [&str; 6] = ["preprocess", "model", "shap", "embedding", "clusters", "subgroups"];
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Complete,
    Failed { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub n_clusters: usize,
    pub train_sizes: BTreeMap<i64, usize>,
    pub test_sizes: BTreeMap<i64, usize>,
}

impl ClusterSummary {
    pub fn of(train: &ClusterAssignment, test: &ClusterAssignment) -> Self {
        let sizes = |a: &ClusterAssignment| {
            let mut m = BTreeMap::new();
            for &l in &a.labels {
                *m.entry(l).or_insert(0) += 1;
            }
            m
        };
        ClusterSummary { n_clusters: train.n_clusters, train_sizes: sizes(train), test_sizes: sizes(test) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub n_rows: usize,
    pub n_positives: usize,
    pub auprc: Option<f64>,
    pub log_loss: Option<f64>,
    pub median_auprc: Option<f64>,
    pub auprc_iqr: Option<f64>,
    pub median_log_loss: Option<f64>,
    pub log_loss_iqr: Option<f64>,
}

impl MetricBundle {
    pub fn of(e: &SliceEvaluation) -> Self {
        MetricBundle {
            n_rows: e.n_rows,
            n_positives: e.n_positives,
            auprc: e.auprc,
            log_loss: e.log_loss,
            median_auprc: e.bootstrap_auprc.as_ref().map(|s| s.median),
            auprc_iqr: e.bootstrap_auprc.as_ref().map(|s| s.iqr),
            median_log_loss: e.bootstrap_log_loss.as_ref().map(|s| s.median),
            log_loss_iqr: e.bootstrap_log_loss.as_ref().map(|s| s.iqr),
        }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub pair: String,
    #[serde(rename = "U")]
    pub u: f64,
    pub p: f64,
    pub stars: String,
    /// Median bootstrap AUPRC of the first and second arm.
    pub medians: [f64; 2],
    pub n: [usize; 2],
    pub method: TestMethod,
}

impl ComparisonRow {
    pub fn of(c: &NamedComparison) -> Self {
        ComparisonRow {
            pair: c.name.clone(),
            u: c.result.u,
            p: c.result.p_value,
            stars: c.result.stars.clone(),
            medians: [c.first_median_auprc, c.second_median_auprc],
            n: [c.result.n_a, c.result.n_b],
            method: c.result.method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSummary {
    pub chosen: Hyperparams,
    pub record: TuningRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub name: String,
    pub labels: Vec<i64>,
    pub retrained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub outcome: RunOutcome,
    pub config: RunConfig,
    pub bootstrap: BootstrapSettings,
    /// Preprocessing summary; per-row origins live in `preprocess/rows.csv`.
    pub preprocess: Option<PreprocessReport>,
    pub tuning: Option<TuningSummary>,
    pub clusters: Option<ClusterSummary>,
    pub selection: Option<Selection>,
    pub subgroups: Vec<SubgroupSummary>,
    /// Keyed by `All`, `A`, `B`, `A-retrained`, `B-retrained`.
    pub metrics: BTreeMap<String, MetricBundle>,
    pub comparisons: Vec<ComparisonRow>,
    pub rankings: Vec<NamedRanking>,
    pub rank_comparisons: Vec<NamedRankComparison>,
    /// Every artifact except this report, sorted by path.
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    fn new(config: &RunConfig) -> Self {
        RunReport {
            outcome: RunOutcome::Complete,
            config: config.clone(),
            bootstrap: BootstrapSettings {
                replicates: config.pipeline.bootstrap_replicates,
                seed: derive_seed(config.pipeline.seed, stream::BOOTSTRAP),
            },
            preprocess: None,
            tuning: None,
            clusters: None,
            selection: None,
            subgroups: Vec::new(),
            metrics: BTreeMap::new(),
            comparisons: Vec::new(),
            rankings: Vec::new(),
            rank_comparisons: Vec::new(),
            manifest: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        crate::io::read_json(&dir.join(REPORT))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMeta {
    pub base_value: f64,
    pub feature_names: Vec<String>,
    pub standardization: shapgroups_core::attribution::StandardizationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutMeta {
    pub config: shapgroups_core::embedding::UmapConfig,
    pub fitted_rows: usize,
    pub a: f64,
    pub b: f64,
    pub sigma_fallbacks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEvaluation {
    pub spec: SubgroupSpec,
    pub evaluation: SliceEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluations {
    pub all: SliceEvaluation,
    pub specs: Vec<SpecEvaluation>,
}

/// `subgroups/<name>/run.json`: the run without its model and per-row outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: SubgroupSpec,
    pub status: shapgroups_core::subgroups::RunStatus,
    pub tuning: Option<TuningRecord>,
    pub train_row_ids: Vec<u64>,
    pub test_row_ids: Vec<u64>,
    pub evaluation: Option<SliceEvaluation>,
}

fn num(v: f64) -> String {
    v.to_string()
}

fn matrix_rows<'a>(ids: &'a [u64], m: &'a Matrix) -> impl Iterator<Item = Vec<String>> + 'a {
    ids.iter().enumerate().map(move |(i, id)| {
        let mut r = vec![id.to_string()];
        r.extend(m.row(i).iter().map(|&v| num(v)));
        r
    })
}

fn with_prefix(first: &[&str], rest: &[String]) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain(rest.iter().cloned()).collect()
}

/// Persists stage outputs as they are produced and collects the report.
struct Writer<'a> {
    dir: &'a Path,
    report: RunReport,
    train_ids: Vec<u64>,
    test_ids: Vec<u64>,
    train_y: Vec<u8>,
    test_y: Vec<u8>,
    feature_names: Vec<String>,
}

impl Writer<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn split_rows(&self) -> impl Iterator<Item = (&'static str, u64, usize)> + '_ {
        let train = self.train_ids.iter().enumerate().map(|(i, &id)| ("train", id, i));
        let test = self.test_ids.iter().enumerate().map(|(i, &id)| ("test", id, i));
        train.chain(test)
    }

    fn stage(&mut self, out: StageOutput<'_>, schema: &[SchemaEntry]) -> Result<()> {
        match out {
            StageOutput::Preprocess(pre) => {
                self.train_ids = pre.train.row_ids().to_vec();
                self.test_ids = pre.test.row_ids().to_vec();
                self.train_y = pre.train.target().to_vec();
                self.test_y = pre.test.target().to_vec();
                write_json(&self.path("preprocess/report.json"), &pre.report)?;
                write_json(&self.path("preprocess/transform.json"), &pre.transform)?;
                write_json(&self.path("preprocess/schema.json"), schema)?;
                let origins = self
                    .train_ids
                    .iter()
                    .zip(&pre.report.train_row_origin)
                    .map(|(id, o)| vec!["train".to_string(), id.to_string(), o.to_string()])
                    .chain(
                        self.test_ids
                            .iter()
                            .zip(&pre.report.test_row_origin)
                            .map(|(id, o)| vec!["test".to_string(), id.to_string(), o.to_string()]),
                    );
                write_records(&self.path("preprocess/rows.csv"), &["split".into(), "row_id".into(), "origin".into()], origins)?;
                for (name, table) in [("train", &pre.train), ("test", &pre.test)] {
                    let header: Vec<String> = std::iter::once("row_id".to_string())
                        .chain(table.columns().iter().map(|c| c.name.clone()))
                        .collect();
                    let rows = (0..table.n_rows()).map(|i| {
                        std::iter::once(table.row_ids()[i].to_string())
                            .chain(table.columns().iter().map(|c| crate::io::format_cell(&c.data, i)))
                            .collect()
                    });
                    write_records(&self.path(&format!("preprocess/{name}.csv")), &header, rows)?;
                }
                let mut summary = pre.report.clone();
                summary.train_row_origin.clear();
                summary.test_row_origin.clear();
                self.report.preprocess = Some(summary);
            }
            StageOutput::GlobalModel(g) => {
                self.feature_names = g.feature_names.clone();
                write_json(&self.path("model/global.json"), &g.tuned.model)?;
                let tuning = TuningSummary { chosen: g.tuned.chosen, record: g.tuned.record.clone() };
                write_json(&self.path("model/tuning.json"), &tuning)?;
                let rows: Vec<Vec<String>> = self
                    .split_rows()
                    .map(|(split, id, i)| {
                        let (y, p) = if split == "train" {
                            (self.train_y[i], g.train_probabilities[i])
                        } else {
                            (self.test_y[i], g.test_probabilities[i])
                        };
                        vec![split.to_string(), id.to_string(), y.to_string(), num(p)]
                    })
                    .collect();
                write_records(
                    &self.path("model/predictions.csv"),
                    &with_prefix(&["split", "row_id", "outcome", "probability"], &[]),
                    rows.into_iter(),
                )?;
                self.report.tuning = Some(tuning);
            }
            StageOutput::Attribution(a) => {
                let header = with_prefix(&["row_id"], &self.feature_names);
                write_records(&self.path("shap/train.csv"), &header, matrix_rows(&self.train_ids, &a.train_shap.values))?;
                write_records(&self.path("shap/test.csv"), &header, matrix_rows(&self.test_ids, &a.test_shap.values))?;
                let meta = AttributionMeta {
                    base_value: a.train_shap.base_value,
                    feature_names: self.feature_names.clone(),
                    standardization: a.standardization.clone(),
                };
                write_json(&self.path("shap/attribution.json"), &meta)?;
            }
            StageOutput::Embedding(e) => {
                let rows: Vec<Vec<String>> = self
                    .split_rows()
                    .map(|(split, id, i)| {
                        let c = if split == "train" { &e.train.coords } else { &e.test.coords };
                        vec![split.to_string(), id.to_string(), num(c.get(i, 0)), num(c.get(i, 1))]
                    })
                    .collect();
                write_records(
                    &self.path("embedding/coords.csv"),
                    &with_prefix(&["split", "row_id", "x", "y"], &[]),
                    rows.into_iter(),
                )?;
                let layout = LayoutMeta {
                    config: e.train.config.clone(),
                    fitted_rows: e.train.fitted_rows,
                    a: e.train.a,
                    b: e.train.b,
                    sigma_fallbacks: e.train.sigma_fallbacks.clone(),
                };
                write_json(&self.path("embedding/layout.json"), &layout)?;
            }
            StageOutput::Clustering(c) => {
                let rows: Vec<Vec<String>> = self
                    .split_rows()
                    .map(|(split, id, i)| {
                        let a = if split == "train" { &c.train } else { &c.test };
                        vec![split.to_string(), id.to_string(), a.labels[i].to_string(), num(a.strength[i])]
                    })
                    .collect();
                write_records(
                    &self.path("clusters/assignments.csv"),
                    &with_prefix(&["split", "row_id", "label", "strength"], &[]),
                    rows.into_iter(),
                )?;
                let summary = ClusterSummary::of(&c.train, &c.test);
                write_json(&self.path("clusters/summary.json"), &summary)?;
                self.report.clusters = Some(summary);
            }
            StageOutput::Subgroups(sg) => {
                let evaluations = Evaluations {
                    all: sg.global_all.clone(),
                    specs: sg
                        .specs
                        .iter()
                        .zip(&sg.evaluations)
                        .map(|(s, e)| SpecEvaluation { spec: s.clone(), evaluation: e.clone() })
                        .collect(),
                };
                write_json(&self.path("subgroups/evaluations.json"), &evaluations)?;
                #[derive(Serialize)]
                struct SelectionFile<'s> {
                    universe: &'s [i64],
                    counts: &'s BTreeMap<i64, shapgroups_core::subgroups::ClusterCounts>,
                    selection: &'s Selection,
                }
                write_json(
                    &self.path("subgroups/selection.json"),
                    &SelectionFile { universe: &sg.universe, counts: &sg.counts, selection: &sg.selection },
                )?;
                for run in &sg.runs {
                    self.write_run(run)?;
                }
                let table: Vec<ComparisonRow> = sg.comparisons.iter().map(ComparisonRow::of).collect();
                write_json(&self.path("subgroups/comparisons.json"), &table)?;
                write_json(&self.path("subgroups/rankings.json"), &sg.rankings)?;
                write_json(&self.path("subgroups/rank_comparisons.json"), &sg.rank_comparisons)?;

                let r = &mut self.report;
                r.selection = Some(sg.selection.clone());
                r.metrics.insert("All".into(), MetricBundle::of(&sg.global_all));
                for run in &sg.runs {
                    if let Some(e) = sg.evaluation_of(&run.spec) {
                        r.metrics.insert(run.spec.name.clone(), MetricBundle::of(e));
                    }
                    if let Some(e) = &run.evaluation {
                        r.metrics.insert(format!("{}-retrained", run.spec.name), MetricBundle::of(e));
                    }
                    r.subgroups.push(SubgroupSummary {
                        name: run.spec.name.clone(),
                        labels: run.spec.labels.clone(),
                        retrained: run.retrained(),
                        failure: match &run.status {
                            shapgroups_core::subgroups::RunStatus::Failed { reason } => Some(reason.clone()),
                            _ => None,
                        },
                        train_rows: run.train_row_ids.len(),
                        test_rows: run.test_row_ids.len(),
                    });
                }
                r.comparisons = table;
                r.rankings = sg.rankings.clone();
                r.rank_comparisons = sg.rank_comparisons.clone();
            }
        }
        Ok(())
    }

    fn write_run(&self, run: &SubgroupRun) -> Result<()> {
        let base = format!("subgroups/{}", run.spec.name);
        let record = RunRecord {
            spec: run.spec.clone(),
            status: run.status.clone(),
            tuning: run.tuning.clone(),
            train_row_ids: run.train_row_ids.clone(),
            test_row_ids: run.test_row_ids.clone(),
            evaluation: run.evaluation.clone(),
        };
        write_json(&self.path(&format!("{base}/run.json")), &record)?;
        let Some(model) = &run.model else { return Ok(()) };
        write_json(&self.path(&format!("{base}/model.json")), model)?;
        let rows = run.test_row_ids.iter().zip(&run.test_probabilities).map(|(&id, &p)| {
            vec![id.to_string(), self.test_y[id as usize].to_string(), num(p)]
        });
        write_records(
            &self.path(&format!("{base}/predictions.csv")),
            &with_prefix(&["row_id", "outcome", "probability"], &[]),
            rows,
        )?;
        if let Some(shap) = &run.test_shap {
            let header = with_prefix(&["row_id"], &self.feature_names);
            write_records(&self.path(&format!("{base}/shap_test.csv")), &header, matrix_rows(&run.test_row_ids, shap))?;
        }
        Ok(())
    }
}

/// Removes the stage directories, plots and report left by an earlier run.
fn clear_outputs(dir: &Path) -> Result<()> {
    for d in STAGE_DIRS.iter().chain(&[PLOTS_DIR]) {
        let p = dir.join(d);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(Error::io(&p))?;
        }
    }
    let report = dir.join(REPORT);
    if report.exists() {
        fs::remove_file(&report).map_err(Error::io(&report))?;
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(dir)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            if dir == root && p.file_name().is_some_and(|n| n == PLOTS_DIR) {
                continue;
            }
            collect_files(root, &p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Hashes every file under the stage directories (plots and the report
/// excluded), sorted by relative path.
pub fn build_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut files = Vec::new();
    for d in STAGE_DIRS {
        let p = dir.join(d);
        if p.is_dir() {
            collect_files(dir, &p, &mut files)?;
        }
    }
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(&f).map_err(Error::io(&f))?;
        out.push(ManifestEntry { path: relative(dir, &f), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Digest of the whole artifact directory: every file outside `plots/`,
/// the report included, hashed as sorted `path\tsha256` lines.
pub fn directory_digest(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut lines: Vec<String> = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(&f).map_err(Error::io(&f))?;
        lines.push(format!("{}\t{}\n", relative(dir, &f), sha256_hex(&bytes)));
    }
    lines.sort();
    Ok(sha256_hex(lines.concat().as_bytes()))
}

/// Runs the pipeline into `dir`. Completed stages are persisted even when
/// a later stage fails; the report then records the failing stage and the
/// function returns [`Error::Stage`].
pub fn execute(config: &RunConfig, dir: &Path, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    config.validate()?;
    let input = config.load_input()?;
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    clear_outputs(dir)?;

    let mut writer = Writer {
        dir,
        report: RunReport::new(config),
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        train_y: Vec::new(),
        test_y: Vec::new(),
        feature_names: Vec::new(),
    };
    let mut io_error: Option<Error> = None;
    let result = run_pipeline(&input.table, &config.pipeline, &mut |out| {
        let stage = stage_of(&out);
        match writer.stage(out, &input.schema) {
            Ok(()) => {
                log(stage.name());
                Ok(())
            }
            Err(e) => {
                let msg = e.to_string();
                io_error = Some(e);
                Err(shapgroups_core::Error::Validation(msg))
            }
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    let failure = match result {
        Ok(output) => {
            write_serving(dir, &output)?;
            None
        }
        Err(f) => {
            let message = f.error.to_string();
            writer.report.outcome = RunOutcome::Failed { stage: f.stage, message: message.clone() };
            Some(Error::Stage { stage: f.stage, message })
        }
    };
    let mut report = writer.report;
    report.manifest = build_manifest(dir)?;
    write_json(&dir.join(REPORT), &report)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn stage_of(out: &StageOutput<'_>) -> Stage {
    match out {
        StageOutput::Preprocess(_) => Stage::Preprocess,
        StageOutput::GlobalModel(_) => Stage::GlobalModel,
        StageOutput::Attribution(_) => Stage::Attribution,
        StageOutput::Embedding(_) => Stage::Embedding,
        StageOutput::Clustering(_) => Stage::Clustering,
        StageOutput::Subgroups(_) => Stage::Subgroups,
    }
}

fn write_serving(dir: &Path, output: &PipelineOutput) -> Result<()> {
    write_json(&dir.join("model/serving.json"), &ServingArtifacts::from_output(output))
}
