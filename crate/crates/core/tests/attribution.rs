mod support;

use proptest::prelude::*;
use shapgroups_core::attribution::{tree_shap, tree_shap_row};
use shapgroups_core::gbdt::{TreeEnsemble, TreeNode};
use shapgroups_core::table::Matrix;
use support::{random_trained_ensemble, shap_oracle};

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

fn leaf(value: f64, cover: f64) -> Box<TreeNode> {
    Box::new(TreeNode::Leaf { value, cover })
}

fn split(feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode>) -> Box<TreeNode> {
    let cover = left.cover() + right.cover();
    Box::new(TreeNode::Split { feature, threshold, cover, left, right })
}

#[test]
fn local_accuracy_on_trained_ensembles() {
    for seed in 0..20 {
        let d = 2 + (seed as usize % 9);
        let (model, x) = random_trained_ensemble(seed, d, 10 + (seed as usize * 7) % 41, 1 + seed as usize % 5);
        let shap = tree_shap(&model, &x, &names(d)).unwrap();
        for i in 0..x.rows() {
            let total = shap.base_value + shap.values.row(i).iter().sum::<f64>();
            assert!((total - model.margin_row(x.row(i))).abs() <= 1e-6, "seed {seed} row {i}");
        }
    }
}

#[test]
fn matches_exhaustive_oracle() {
    for seed in 0..5 {
        let d = 4 + seed as usize;
        let (model, x) = random_trained_ensemble(100 + seed, d, 30, 4);
        let shap = tree_shap(&model, &x, &names(d)).unwrap();
        for i in 0..40 {
            let (base, phi) = shap_oracle(&model, x.row(i));
            assert!((base - shap.base_value).abs() <= 1e-9);
            for (j, p) in phi.iter().enumerate() {
                assert!((p - shap.values.get(i, j)).abs() <= 1e-9, "seed {seed} row {i} feature {j}");
            }
        }
    }
}

#[test]
fn additive_over_trees() {
    let (model, x) = random_trained_ensemble(7, 6, 25, 3);
    let shap = tree_shap(&model, &x, &names(6)).unwrap();
    for i in 0..x.rows() {
        let mut sum = [0.0; 6];
        for t in &model.trees {
            for (s, v) in sum.iter_mut().zip(tree_shap_row(t, x.row(i), 6)) {
                *s += model.learning_rate * v;
            }
        }
        for j in 0..6 {
            assert!((sum[j] - shap.values.get(i, j)).abs() <= 1e-12);
        }
    }
}

#[test]
fn unused_feature_gets_zero() {
    let tree = split(0, 0.5, split(1, 0.0, leaf(-1.0, 3.0), leaf(0.5, 2.0)), leaf(2.0, 5.0));
    let model = TreeEnsemble { base_score: 0.1, learning_rate: 0.3, n_features: 3, trees: vec![*tree] };
    let x = Matrix::from_rows(&[vec![0.0, -1.0, 9.0], vec![1.0, 1.0, -9.0], vec![0.2, 0.4, 0.0]]);
    let shap = tree_shap(&model, &x, &names(3)).unwrap();
    for i in 0..3 {
        assert_eq!(shap.values.get(i, 2), 0.0);
    }
}

#[test]
fn symmetric_features_share_credit() {
    // f(x) depends on x0 and x1 only through their sum of indicators
    let tree = split(
        0,
        0.5,
        split(1, 0.5, leaf(0.0, 1.0), leaf(1.0, 1.0)),
        split(1, 0.5, leaf(1.0, 1.0), leaf(3.0, 1.0)),
    );
    let model = TreeEnsemble { base_score: 0.0, learning_rate: 1.0, n_features: 2, trees: vec![*tree] };
    let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
    let shap = tree_shap(&model, &x, &names(2)).unwrap();
    for i in 0..2 {
        assert!((shap.values.get(i, 0) - shap.values.get(i, 1)).abs() <= 1e-12);
    }
    assert!((shap.values.get(0, 0) - 0.875).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn local_accuracy_property(seed in 0u64..10_000, d in 1usize..8, trees in 1usize..20, depth in 1usize..5) {
        let (model, x) = random_trained_ensemble(seed, d, trees, depth);
        let shap = tree_shap(&model, &x, &names(d)).unwrap();
        for i in 0..x.rows() {
            let total = shap.base_value + shap.values.row(i).iter().sum::<f64>();
            prop_assert!((total - model.margin_row(x.row(i))).abs() <= 1e-6);
        }
    }
}
