use std::collections::BTreeMap;

use proptest::prelude::*;
use shapgroups_core::stats::{Metric, MetricSamples};
use shapgroups_core::subgroups::{
    enumerate_labels, enumerate_subgroups, select_subgroups, ClusterCounts, SelectionCriteria, SliceEvaluation,
    SubgroupSpec,
};

fn evaluation(median: Option<f64>) -> SliceEvaluation {
    SliceEvaluation {
        n_rows: 10,
        n_positives: 3,
        evaluable: median.is_some(),
        auprc: median,
        log_loss: median.map(|_| 0.5),
        bootstrap_auprc: median.map(|m| MetricSamples::from_replicates(Metric::Auprc, vec![m], 0, 0)),
        bootstrap_log_loss: None,
    }
}

fn summed(spec: &SubgroupSpec, counts: &BTreeMap<i64, ClusterCounts>) -> ClusterCounts {
    spec.labels.iter().fold(ClusterCounts::default(), |acc, l| {
        let c = counts[l];
        ClusterCounts {
            train_rows: acc.train_rows + c.train_rows,
            train_positives: acc.train_positives + c.train_positives,
            test_rows: acc.test_rows + c.test_rows,
        }
    })
}

fn meets(c: ClusterCounts, k: &SelectionCriteria) -> bool {
    c.train_rows >= k.min_train_rows && c.test_rows >= k.min_test_rows && c.train_positives >= k.min_train_positives
}

#[test]
fn enumeration_counts() {
    for m in 1..=6usize {
        assert_eq!(enumerate_subgroups(m, false).unwrap().len(), (1 << m) - 1);
        assert_eq!(enumerate_subgroups(m, true).unwrap().len(), (1 << (m + 1)) - 1);
    }
}

#[test]
fn seventeen_labels_are_refused() {
    let universe: Vec<i64> = (0..17).collect();
    assert!(enumerate_labels(&universe).is_err());
}

type Instance = (Vec<i64>, BTreeMap<i64, ClusterCounts>, Vec<Option<f64>>);

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..6, any::<bool>()).prop_flat_map(|(m, noise)| {
        let mut universe: Vec<i64> = (0..m as i64).collect();
        if noise {
            universe.insert(0, -1);
        }
        let u = universe.len();
        let n_specs = (1usize << u) - 1;
        (
            Just(universe),
            proptest::collection::vec((0usize..250, 0usize..30, 0usize..80), u),
            proptest::collection::vec(proptest::option::weighted(0.9, 0.0f64..1.0), n_specs),
        )
            .prop_map(|(universe, raw, medians)| {
                let counts = universe
                    .iter()
                    .zip(raw)
                    .map(|(&l, (rows, pos, test))| {
                        (l, ClusterCounts { train_rows: rows, train_positives: pos.min(rows), test_rows: test })
                    })
                    .collect();
                (universe, counts, medians)
            })
    })
}

proptest! {
    #[test]
    fn enumeration_is_every_nonempty_subset(m in 1usize..=6, noise in any::<bool>()) {
        let specs = enumerate_subgroups(m, noise).unwrap();
        let u = m + usize::from(noise);
        prop_assert_eq!(specs.len(), (1usize << u) - 1);
        let mut seen: Vec<Vec<i64>> = specs.iter().map(|s| s.labels.clone()).collect();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), specs.len());
        for w in specs.windows(2) {
            prop_assert!(w[0].labels.len() <= w[1].labels.len());
        }
    }

    #[test]
    fn selection_is_zero_or_a_qualifying_pair((universe, counts, medians) in instance(), partition in any::<bool>()) {
        let specs = enumerate_labels(&universe).unwrap();
        let metrics: Vec<SliceEvaluation> = medians.iter().map(|&m| evaluation(m)).collect();
        let criteria = SelectionCriteria { require_partition: partition, ..SelectionCriteria::default() };
        let sel = select_subgroups(&universe, &counts, &specs, &metrics, &criteria).unwrap();
        prop_assert!(sel.count() == 0 || sel.count() == 2);

        // independent search over every qualifying pair
        let qualifies = |i: usize| meets(summed(&specs[i], &counts), &criteria) && medians[i].is_some();
        let mut best: Option<f64> = None;
        let mut n_candidates = 0;
        for i in 0..specs.len() {
            for j in i + 1..specs.len() {
                if !specs[i].is_disjoint(&specs[j]) || !qualifies(i) || !qualifies(j) {
                    continue;
                }
                if partition && specs[i].labels.len() + specs[j].labels.len() != universe.len() {
                    continue;
                }
                n_candidates += 1;
                let gap = (medians[i].unwrap() - medians[j].unwrap()).abs();
                best = Some(best.map_or(gap, |b: f64| b.max(gap)));
            }
        }
        prop_assert_eq!(sel.candidates, n_candidates);
        match (&sel.pair, best) {
            (None, None) => {}
            (Some(p), Some(gap)) => {
                prop_assert!(p.a.is_disjoint(&p.b));
                prop_assert!(p.median_auprc_a >= p.median_auprc_b);
                prop_assert!((p.median_auprc_a - p.median_auprc_b - gap).abs() <= 1e-12);
                prop_assert!(meets(summed(&p.a, &counts), &criteria));
                prop_assert!(meets(summed(&p.b, &counts), &criteria));
                if partition {
                    prop_assert_eq!(p.a.labels.len() + p.b.labels.len(), universe.len());
                }
            }
            _ => prop_assert!(false, "selection disagrees with exhaustive search"),
        }
    }
}
