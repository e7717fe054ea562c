use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapgroups::config::{InputSource, RunConfig};
use shapgroups::io::{write_json, Records};
use shapgroups::{RunOutcome, RunReport};
use shapgroups_core::clustering::HdbscanConfig;
use shapgroups_core::gbdt::Hyperparams;
use shapgroups_core::pipeline::{PipelineConfig, ScoreRecord, Stage};
use shapgroups_core::synthetic::{Missingness, PlantedSubgroup, SyntheticSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shapgroups"))
}

fn call(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn quick(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::planted_benchmark(seed);
    cfg.grid = vec![Hyperparams { n_trees: 100, max_depth: 1, learning_rate: 0.3, ..Hyperparams::default() }];
    cfg.bootstrap_replicates = 40;
    cfg.umap.n_epochs = 100;
    cfg.hdbscan = HdbscanConfig { min_cluster_size: 60, min_samples: Some(30) };
    cfg
}

fn one_blob(n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_rows: n,
        n_features: 6,
        subgroups: vec![PlantedSubgroup {
            weight: 1.0,
            feature_means: vec![0.0; 6],
            coefficients: vec![1.0, 0.8, 0.6, 0.0, 0.0, 0.0],
            prevalence: 0.25,
        }],
        missingness: Missingness::None,
        missing_columns: None,
        seed,
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("config.json");
    write_json(&p, cfg).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `synth` then a CSV-input run of the planted cohort.
fn planted_run(root: &Path) -> (PathBuf, PathBuf) {
    let spec = root.join("spec.json");
    write_json(&spec, &SyntheticSpec::two_mechanism(1500, 9, 1)).unwrap();
    let o = call(&["synth", "--spec", s(&spec), "--out", s(&root.join("cohort.csv"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("cohort.schema.json").exists() && root.join("cohort.planted.csv").exists());

    let input = InputSource::Csv { path: "cohort.csv".into(), schema: "cohort.schema.json".into() };
    let cfg = write_config(root, &RunConfig::new(input, quick(1)));
    let out = root.join("run");
    let o = call(&["run", "--config", s(&cfg), "--outdir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = String::from_utf8_lossy(&o.stderr);
    for stage in ["preprocess", "global_model", "attribution", "embedding", "clustering", "subgroups"] {
        assert!(log.contains(&format!("stage {stage}")), "{log}");
    }
    (out, root.join("cohort.csv"))
}

fn first_row_file(csv: &Path, dest: &Path) -> PathBuf {
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let body = format!("{}\n{}\n", lines.next().unwrap(), lines.next().unwrap());
    fs::write(dest, body).unwrap();
    dest.to_path_buf()
}

#[test]
fn planted_run_verifies_plots_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, csv) = planted_run(tmp.path());
    let report = RunReport::load(&out).unwrap();
    assert_eq!(report.outcome, RunOutcome::Complete);
    let names: Vec<&str> = report.subgroups.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["A", "B"]);
    assert!(report.metrics.contains_key("A-retrained"));

    let o = call(&["verify", "--artifacts", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = call(&["emit-plots", "--artifacts", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let emb = Records::read(&out.join("plots/embedding.csv")).unwrap();
    let rows = Records::read(&out.join("preprocess/rows.csv")).unwrap();
    assert_eq!(emb.rows.len(), rows.rows.len());
    let snapshot: Vec<(PathBuf, Vec<u8>)> = walk(&out.join("plots")).into_iter().map(|p| (p.clone(), fs::read(&p).unwrap())).collect();
    assert!(snapshot.iter().any(|(p, _)| p.ends_with("ranking_global_on_All.csv")));
    assert!(snapshot.iter().any(|(p, _)| p.ends_with("ranking_A-retrained_on_A.csv")));
    assert_eq!(code(&call(&["emit-plots", "--artifacts", s(&out)])), 0);
    for (p, bytes) in &snapshot {
        assert_eq!(&fs::read(p).unwrap(), bytes, "{} changed on re-emission", p.display());
    }
    // plots are outside the manifest
    assert_eq!(code(&call(&["verify", "--artifacts", s(&out)])), 0);

    let row = first_row_file(&csv, &tmp.path().join("row.csv"));
    let o = call(&["score", "--artifacts", s(&out), "--row", s(&row)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec: ScoreRecord = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rec.probability > 0.0 && rec.probability < 1.0);
    let expected_model = match rec.subgroup.as_str() {
        "none" => "global".to_string(),
        g => format!("{g}-retrained"),
    };
    assert_eq!(rec.model, expected_model);

    fs::write(tmp.path().join("bad.csv"), "x0,x1\n1,2\n").unwrap();
    let o = call(&["score", "--artifacts", s(&out), "--row", s(&tmp.path().join("bad.csv"))]);
    assert_eq!(code(&o), 2);
    let text = fs::read_to_string(&row).unwrap().replacen('\n', "\nnot-a-number", 1);
    fs::write(tmp.path().join("bad2.csv"), text).unwrap();
    assert_eq!(code(&call(&["score", "--artifacts", s(&out), "--row", s(&tmp.path().join("bad2.csv"))])), 2);

    // tampering is caught
    let mut report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let v = report["metrics"]["A"]["median_auprc"].as_f64().unwrap();
    report["metrics"]["A"]["median_auprc"] = serde_json::json!(v + 0.01);
    let pristine = fs::read(out.join("report.json")).unwrap();
    fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report).unwrap()).unwrap();
    let o = call(&["verify", "--artifacts", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("metrics for A"));
    fs::write(out.join("report.json"), pristine).unwrap();

    let preds = out.join("subgroups/A/predictions.csv");
    let mut bytes = fs::read(&preds).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&preds, bytes).unwrap();
    assert_eq!(code(&call(&["verify", "--artifacts", s(&out)])), 1);
    fs::remove_file(&preds).unwrap();
    assert_eq!(code(&call(&["verify", "--artifacts", s(&out)])), 1);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn zero_subgroup_run_scores_with_the_global_model() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick(0);
    cfg.hdbscan = HdbscanConfig { min_cluster_size: 300, min_samples: Some(50) };
    let mut run = RunConfig::new(InputSource::Synthetic(one_blob(800, 3)), cfg);
    run.output_dir = Some("out".into());
    let config = write_config(tmp.path(), &run);
    let o = call(&["run", "--config", s(&config)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let report = RunReport::load(&out).unwrap();
    assert!(report.subgroups.is_empty());
    assert_eq!(report.metrics.keys().collect::<Vec<_>>(), ["All"]);
    assert_eq!(code(&call(&["verify", "--artifacts", s(&out)])), 0);
    assert_eq!(code(&call(&["emit-plots", "--artifacts", s(&out)])), 0);

    let row = tmp.path().join("row.csv");
    fs::write(&row, "x0,x1,x2,x3,x4,x5\n0.1,-0.2,NA,1.5,0,0.3\n").unwrap();
    let o = call(&["score", "--artifacts", s(&out), "--row", s(&row)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec: ScoreRecord = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rec.model, "global");
    assert_eq!(rec.subgroup, "none");
}

#[test]
fn stage_failure_is_recorded_with_exit_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick(2);
    // fine-grained clustering yields more labels than can be enumerated
    cfg.hdbscan = HdbscanConfig { min_cluster_size: 5, min_samples: Some(2) };
    let run = RunConfig::new(InputSource::Synthetic(SyntheticSpec::two_mechanism(1000, 9, 2)), cfg);
    let config = write_config(tmp.path(), &run);
    let out = tmp.path().join("out");
    let o = call(&["run", "--config", s(&config), "--outdir", s(&out)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subgroups"));
    let report = RunReport::load(&out).unwrap();
    match &report.outcome {
        RunOutcome::Failed { stage, message } => {
            assert_eq!(*stage, Stage::Subgroups);
            assert!(!message.is_empty());
        }
        other => panic!("expected a failure record, got {other:?}"),
    }
    assert!(out.join("clusters/assignments.csv").exists());
    assert!(!out.join("model/serving.json").exists());
    assert_eq!(code(&call(&["verify", "--artifacts", s(&out)])), 0);
    assert_eq!(code(&call(&["emit-plots", "--artifacts", s(&out)])), 2);
}

#[test]
fn input_problems_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), "{ not json").unwrap();
    assert_eq!(code(&call(&["run", "--config", s(&tmp.path().join("c.json")), "--outdir", "x"])), 2);

    let mut cfg = quick(0);
    cfg.grid.clear();
    let config = write_config(tmp.path(), &RunConfig::new(InputSource::Synthetic(one_blob(100, 0)), cfg));
    let o = call(&["run", "--config", s(&config), "--outdir", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));

    let config = write_config(tmp.path(), &RunConfig::new(InputSource::Synthetic(one_blob(100, 0)), quick(0)));
    assert_eq!(code(&call(&["run", "--config", s(&config)])), 2);

    fs::write(tmp.path().join("d.csv"), "x,outcome\n1,0\n2,7\n").unwrap();
    fs::write(tmp.path().join("d.schema.json"), r#"[{"name":"x","kind":"continuous"},{"name":"outcome","kind":"binary-target"}]"#).unwrap();
    let input = InputSource::Csv { path: "d.csv".into(), schema: "d.schema.json".into() };
    let config = write_config(tmp.path(), &RunConfig::new(input, quick(0)));
    let o = call(&["run", "--config", s(&config), "--outdir", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 2") && err.contains("`outcome`"), "{err}");

    assert_eq!(code(&call(&["verify", "--artifacts", s(&tmp.path().join("nowhere"))])), 2);
}
