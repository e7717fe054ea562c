//! Audits a run directory: manifest hashes, then every reported metric,
//! comparison and ranking recomputed from the persisted per-row outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use shapgroups_core::stats::{mann_whitney_u, top_features_of, FeatureRanking};
use shapgroups_core::subgroups::{evaluate_slice, SliceEvaluation};
use shapgroups_core::table::Matrix;

use crate::artifacts::{build_manifest, sha256_hex, ClusterSummary, MetricBundle, RunOutcome, RunReport};
use crate::error::{Error, Result};
use crate::io::Records;

const TOLERANCE: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOLERANCE * (1.0 + a.abs().max(b.abs()))
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    }
}

fn same_bundle(a: &MetricBundle, b: &MetricBundle) -> bool {
    a.n_rows == b.n_rows
        && a.n_positives == b.n_positives
        && close_opt(a.auprc, b.auprc)
        && close_opt(a.log_loss, b.log_loss)
        && close_opt(a.median_auprc, b.median_auprc)
        && close_opt(a.auprc_iqr, b.auprc_iqr)
        && close_opt(a.median_log_loss, b.median_log_loss)
        && close_opt(a.log_loss_iqr, b.log_loss_iqr)
}

fn same_ranking(a: &FeatureRanking, b: &FeatureRanking) -> bool {
    a.entries.len() == b.entries.len()
        && a.entries.iter().zip(&b.entries).all(|(x, y)| x.feature == y.feature && close(x.mean_abs_shap, y.mean_abs_shap))
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Verify(what()))
    }
}

/// Test-split rows of a per-row CSV keyed by `row_id`.
fn test_rows(r: &Records) -> Result<Vec<usize>> {
    let split = r.index("split")?;
    Ok((0..r.rows.len()).filter(|&i| r.rows[i][split] == "test").collect())
}

fn shap_matrix(path: &Path, names: &[String]) -> Result<(Vec<u64>, Matrix)> {
    let r = Records::read(path)?;
    let ids: Vec<u64> = r.column("row_id")?;
    let cols: Vec<usize> = names.iter().map(|n| r.index(n)).collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(ids.len() * cols.len());
    for i in 0..r.rows.len() {
        for &c in &cols {
            data.push(r.parse::<f64>(i, c)?);
        }
    }
    Ok((ids, Matrix::new(r.rows.len(), cols.len(), data)))
}

/// Returns the list of checks that passed.
pub fn verify(dir: &Path) -> Result<Vec<String>> {
    let report = RunReport::load(dir)?;
    let mut checks = Vec::new();

    for entry in &report.manifest {
        let path = dir.join(&entry.path);
        let bytes = fs::read(&path).map_err(|_| Error::Verify(format!("{} is missing", entry.path)))?;
        ensure(sha256_hex(&bytes) == entry.sha256, || format!("{} does not match its hash", entry.path))?;
    }
    let present: Vec<String> = build_manifest(dir)?.into_iter().map(|e| e.path).collect();
    let listed: Vec<String> = report.manifest.iter().map(|e| e.path.clone()).collect();
    ensure(present == listed, || "artifact files differ from the manifest".into())?;
    checks.push(format!("{} manifest hashes", listed.len()));

    if report.outcome != RunOutcome::Complete {
        checks.push("run recorded a stage failure; metric audit skipped".into());
        return Ok(checks);
    }
    let boot = report.bootstrap;
    let top_k = report.config.pipeline.top_k;

    // global predictions and test-split cluster labels, by test row id
    let preds = Records::read(&dir.join("model/predictions.csv"))?;
    let (ids_col, y_col, p_col) = (preds.index("row_id")?, preds.index("outcome")?, preds.index("probability")?);
    let mut test: BTreeMap<u64, (u8, f64)> = BTreeMap::new();
    for i in test_rows(&preds)? {
        test.insert(preds.parse(i, ids_col)?, (preds.parse(i, y_col)?, preds.parse(i, p_col)?));
    }
    let assign = Records::read(&dir.join("clusters/assignments.csv"))?;
    let (a_split, a_id, a_label) = (assign.index("split")?, assign.index("row_id")?, assign.index("label")?);
    let mut labels: BTreeMap<(String, u64), i64> = BTreeMap::new();
    for i in 0..assign.rows.len() {
        labels.insert((assign.rows[i][a_split].clone(), assign.parse(i, a_id)?), assign.parse(i, a_label)?);
    }

    let slice = |keep: &dyn Fn(u64) -> bool| -> Result<SliceEvaluation> {
        let (y, p): (Vec<u8>, Vec<f64>) = test.iter().filter(|(id, _)| keep(**id)).map(|(_, v)| *v).unzip();
        Ok(evaluate_slice(&y, &p, boot)?)
    };
    let mut arms: BTreeMap<String, SliceEvaluation> = BTreeMap::new();
    arms.insert("All".into(), slice(&|_| true)?);

    let mut train_sizes = BTreeMap::new();
    let mut test_sizes = BTreeMap::new();
    for ((split, _), &l) in &labels {
        let m = if split == "train" { &mut train_sizes } else { &mut test_sizes };
        *m.entry(l).or_insert(0usize) += 1;
    }
    let reported = report.clusters.as_ref().ok_or_else(|| Error::Verify("report lacks a cluster summary".into()))?;
    let recomputed = ClusterSummary { n_clusters: reported.n_clusters, train_sizes, test_sizes };
    ensure(&recomputed == reported, || "cluster sizes disagree with clusters/assignments.csv".into())?;
    checks.push("cluster sizes".into());

    let meta: crate::artifacts::AttributionMeta = crate::io::read_json(&dir.join("shap/attribution.json"))?;
    let names = &meta.feature_names;
    let (shap_ids, shap_test) = shap_matrix(&dir.join("shap/test.csv"), names)?;
    let mut rankings: Vec<(String, String, FeatureRanking)> =
        vec![("global".into(), "All".into(), top_features_of(&shap_test, names, top_k))];

    for s in &report.subgroups {
        let in_spec = |id: u64| s.labels.contains(&labels[&("test".to_string(), id)]);
        arms.insert(s.name.clone(), slice(&in_spec)?);
        let rows: Vec<usize> = (0..shap_ids.len()).filter(|&i| in_spec(shap_ids[i])).collect();
        rankings.push(("global".into(), s.name.clone(), top_features_of(&shap_test.select_rows(&rows), names, top_k)));
        if !s.retrained {
            continue;
        }
        let base = dir.join("subgroups").join(&s.name);
        let r = Records::read(&base.join("predictions.csv"))?;
        let y: Vec<u8> = r.column("outcome")?;
        let p: Vec<f64> = r.column("probability")?;
        let retrained = format!("{}-retrained", s.name);
        arms.insert(retrained.clone(), evaluate_slice(&y, &p, boot)?);
        let (_, m) = shap_matrix(&base.join("shap_test.csv"), names)?;
        rankings.push((retrained, s.name.clone(), top_features_of(&m, names, top_k)));
    }

    for (name, eval) in &arms {
        let got = MetricBundle::of(eval);
        let reported = report.metrics.get(name).ok_or_else(|| Error::Verify(format!("report lacks metrics for {name}")))?;
        ensure(same_bundle(&got, reported), || format!("metrics for {name} do not recompute"))?;
    }
    ensure(arms.len() == report.metrics.len(), || "report lists metrics for unknown slices".into())?;
    checks.push(format!("{} metric bundles", arms.len()));

    for row in &report.comparisons {
        let (first, second) =
            row.pair.split_once(" vs ").ok_or_else(|| Error::Verify(format!("bad comparison name `{}`", row.pair)))?;
        let reps = |arm: &str| {
            arms.get(arm)
                .and_then(|e| e.bootstrap_auprc.as_ref())
                .map(|s| s.replicates.clone())
                .ok_or_else(|| Error::Verify(format!("no replicates for `{arm}`")))
        };
        let res = mann_whitney_u(&reps(first)?, &reps(second)?);
        ensure(close(res.u, row.u) && close(res.p_value, row.p) && res.stars == row.stars, || {
            format!("comparison `{}` does not recompute", row.pair)
        })?;
        let medians = [arms[first].median_auprc(), arms[second].median_auprc()];
        ensure(close_opt(medians[0], Some(row.medians[0])) && close_opt(medians[1], Some(row.medians[1])), || {
            format!("comparison `{}` medians do not recompute", row.pair)
        })?;
    }
    checks.push(format!("{} comparisons", report.comparisons.len()));

    for (model, slice_name, ranking) in &rankings {
        let reported = report
            .rankings
            .iter()
            .find(|r| &r.model == model && &r.slice == slice_name)
            .ok_or_else(|| Error::Verify(format!("report lacks ranking {model}@{slice_name}")))?;
        ensure(same_ranking(ranking, &reported.ranking), || format!("ranking {model}@{slice_name} does not recompute"))?;
    }
    checks.push(format!("{} rankings", rankings.len()));
    Ok(checks)
}
