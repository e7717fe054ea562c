use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapgroups_core::clustering::HdbscanConfig;
use shapgroups_core::gbdt::Hyperparams;
use shapgroups_core::pipeline::{run_pipeline, score_new_patient, PipelineConfig, ServingArtifacts, Stage};
use shapgroups_core::synthetic::{generate_synthetic, Missingness, PlantedSubgroup, SyntheticSpec};
use shapgroups_core::Error;

fn quick_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::planted_benchmark(seed);
    cfg.grid = vec![Hyperparams { n_trees: 100, max_depth: 1, learning_rate: 0.3, ..Hyperparams::default() }];
    cfg.bootstrap_replicates = 40;
    cfg.umap.n_epochs = 100;
    cfg.hdbscan = HdbscanConfig { min_cluster_size: 60, min_samples: Some(30) };
    cfg
}

fn one_blob(n: usize, seed: u64) -> SyntheticSpec {
    let d = 6;
    SyntheticSpec {
        n_rows: n,
        n_features: d,
        subgroups: vec![PlantedSubgroup {
            weight: 1.0,
            feature_means: vec![0.0; d],
            coefficients: vec![1.0, 0.8, 0.6, 0.0, 0.0, 0.0],
            prevalence: 0.25,
        }],
        missingness: Missingness::None,
        missing_columns: None,
        seed,
    }
}

#[test]
fn single_population_gives_zero_subgroups() {
    let cohort = generate_synthetic(&one_blob(800, 3)).unwrap();
    let mut cfg = quick_config(0);
    cfg.hdbscan = HdbscanConfig { min_cluster_size: 300, min_samples: Some(50) };
    let out = run_pipeline(&cohort.table, &cfg, &mut |_| Ok(())).unwrap();
    let sg = &out.subgroups;
    assert_eq!(sg.selection.count(), 0);
    assert!(sg.runs.is_empty());
    assert!(sg.comparisons.is_empty());
    assert_eq!(sg.rankings.len(), 1);

    let art = ServingArtifacts::from_output(&out);
    let rec = score_new_patient(&art, out.global.x_test.row(0)).unwrap();
    assert_eq!(rec.model, "global");
    assert_eq!(rec.subgroup, "none");
}

#[test]
fn randomized_cohorts_select_zero_or_two() {
    let mut r = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..6u64 {
        let d = r.gen_range(6..=10);
        let mut spec = SyntheticSpec::two_mechanism(r.gen_range(500..900), d, trial);
        for s in &mut spec.subgroups {
            s.prevalence = r.gen_range(0.08..0.45);
            s.weight = r.gen_range(0.2..0.8);
        }
        let cohort = generate_synthetic(&spec).unwrap();
        let out = match run_pipeline(&cohort.table, &quick_config(trial), &mut |_| Ok(())) {
            Ok(o) => o,
            // too many clusters to enumerate is a recorded stage failure, not a selection outcome
            Err(f) => {
                assert_eq!(f.stage, Stage::Subgroups, "trial {trial}: {f}");
                assert!(matches!(f.error, Error::Enumeration(_)));
                continue;
            }
        };
        let sg = &out.subgroups;
        match &sg.selection.pair {
            None => assert!(sg.runs.is_empty()),
            Some(p) => {
                assert!(p.a.is_disjoint(&p.b));
                assert_eq!(sg.runs.len(), 2);
                assert_eq!(sg.runs[0].spec.name, "A");
                assert_eq!(sg.runs[1].spec.name, "B");
            }
        }
    }
}

#[test]
fn planted_cohort_end_to_end() {
    let cohort = generate_synthetic(&SyntheticSpec::two_mechanism(1500, 9, 1)).unwrap();
    let cfg = quick_config(1);
    let mut seen = Vec::new();
    let out = run_pipeline(&cohort.table, &cfg, &mut |s| {
        seen.push(format!("{s:?}").split('(').next().unwrap().to_string());
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, ["Preprocess", "GlobalModel", "Attribution", "Embedding", "Clustering", "Subgroups"]);
    let again = run_pipeline(&cohort.table, &cfg, &mut |_| Ok(())).unwrap();
    assert_eq!(out, again);

    let sg = &out.subgroups;
    let pair = sg.selection.pair.as_ref().expect("planted cohort should yield a pair");
    let names: Vec<&str> = sg.comparisons.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["All vs A", "All vs B", "A vs A-retrained", "B vs B-retrained"]);
    assert!(pair.median_auprc_a >= pair.median_auprc_b);

    // training rows score into their own cluster
    let art = ServingArtifacts::from_output(&out);
    for i in (0..out.global.x_train.rows()).step_by(37) {
        let rec = score_new_patient(&art, out.global.x_train.row(i)).unwrap();
        assert_eq!(rec.cluster, out.clustering.train.labels[i]);
        let expected = if pair.a.contains(rec.cluster) {
            "A"
        } else if pair.b.contains(rec.cluster) {
            "B"
        } else {
            "none"
        };
        assert_eq!(rec.subgroup, expected);
    }
    assert!(matches!(score_new_patient(&art, &[0.0]), Err(Error::Schema(_))));
}

#[test]
fn observer_error_names_the_stage() {
    let cohort = generate_synthetic(&one_blob(300, 1)).unwrap();
    let err = run_pipeline(&cohort.table, &quick_config(0), &mut |s| match s {
        shapgroups_core::pipeline::StageOutput::Embedding(_) => Err(Error::Validation("stop".into())),
        _ => Ok(()),
    })
    .unwrap_err();
    assert_eq!(err.stage, Stage::Embedding);
}
