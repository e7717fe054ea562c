mod support;

use proptest::prelude::*;
use rand::Rng;
use shapgroups_core::preprocess::{exclude_by_missingness, preprocess, ExclusionReason, PreprocessConfig};
use shapgroups_core::table::{Column, ColumnData, FeatureTable};
use support::rng;

fn with_missing(n: usize, missing: usize) -> ColumnData {
    ColumnData::Continuous((0..n).map(|i| if i < missing { None } else { Some(i as f64) }).collect())
}

#[test]
fn missing_rate_boundary() {
    let n = 1000;
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let train = FeatureTable::new(vec![
        Column::new("at_limit", with_missing(n, 100)),
        Column::new("over_limit", with_missing(n, 101)),
        Column::new("outcome", ColumnData::Target(y.clone())),
    ])
    .unwrap();
    let test = train.select_rows(&[0, 500, 999]);
    let (tr, te, rates) = exclude_by_missingness(train, test, 0.10);
    assert_eq!(rates["at_limit"], 0.10);
    assert_eq!(rates["over_limit"], 0.101);
    assert_eq!(tr.feature_names(), vec!["at_limit"]);
    assert_eq!(te.feature_names(), vec!["at_limit"]);
}

/// A cohort with informative continuous and categorical columns, a noise
/// column and sparse missingness.
fn cohort(seed: u64, n: usize) -> FeatureTable {
    let mut r = rng(seed);
    let mut sig = Vec::new();
    let mut noise = Vec::new();
    let mut ward = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let s: f64 = r.gen_range(-2.0..2.0);
        let w = ["a", "b", "c"][r.gen_range(0..3)];
        let m = 1.5 * s + if w == "a" { 1.0 } else { -0.5 };
        y.push(u8::from(r.gen::<f64>() < 1.0 / (1.0 + (-m).exp())));
        sig.push(if r.gen::<f64>() < 0.05 { None } else { Some(s) });
        noise.push(if r.gen::<f64>() < 0.3 { None } else { Some(r.gen_range(0.0..1.0)) });
        ward.push(if r.gen::<f64>() < 0.04 { None } else { Some(w.to_string()) });
    }
    FeatureTable::new(vec![
        Column::new("signal", ColumnData::Continuous(sig)),
        Column::new("noise", ColumnData::Continuous(noise)),
        Column::new("ward", ColumnData::Categorical(ward)),
        Column::new("outcome", ColumnData::Target(y)),
    ])
    .unwrap()
}

fn mutate_rows(table: &FeatureTable, rows: &[u64], seed: u64) -> FeatureTable {
    let mut r = rng(seed);
    let mut cols: Vec<Column> = table.columns().to_vec();
    for c in &mut cols {
        for &row in rows {
            let i = row as usize;
            match &mut c.data {
                ColumnData::Continuous(v) => {
                    v[i] = if r.gen::<f64>() < 0.5 { None } else { Some(r.gen_range(-1e3..1e3)) }
                }
                ColumnData::Categorical(v) => {
                    v[i] = if r.gen::<f64>() < 0.5 { None } else { Some(format!("unseen-{}", r.gen_range(0..5))) }
                }
                ColumnData::Target(_) => {}
            }
        }
    }
    FeatureTable::with_row_ids(cols, table.row_ids().to_vec()).unwrap()
}

#[test]
fn configured_and_noise_exclusions_are_reported() {
    let raw = cohort(1, 600);
    let cfg = PreprocessConfig { drop_columns: vec!["signal".into()], ..PreprocessConfig::default() };
    let out = preprocess(&raw, &cfg).unwrap();
    assert_eq!(out.report.reason_for("signal"), Some(&ExclusionReason::Configured));
    assert!(matches!(out.report.reason_for("noise"), Some(ExclusionReason::MissingRate { .. })));
    assert!(out.report.retained.contains(&"ward".to_string()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn test_cells_never_leak_into_fitted_state(seed in 0u64..1000, mutation in any::<u64>()) {
        let raw = cohort(seed, 400);
        let cfg = PreprocessConfig { seed, ..PreprocessConfig::default() };
        let before = preprocess(&raw, &cfg).unwrap();
        let mutated = mutate_rows(&raw, &before.report.test_row_origin, mutation);
        let after = preprocess(&mutated, &cfg).unwrap();
        prop_assert_eq!(&before.report.retained, &after.report.retained);
        prop_assert_eq!(&before.report.encoders, &after.report.encoders);
        prop_assert_eq!(&before.report.imputation.train, &after.report.imputation.train);
        prop_assert_eq!(&before.report.missing_rates, &after.report.missing_rates);
        prop_assert_eq!(&before.report.associations, &after.report.associations);
        prop_assert_eq!(&before.train, &after.train);
        prop_assert_eq!(&before.report.test_row_origin, &after.report.test_row_origin);
    }
}
