use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attribution::ShapMatrix;
use crate::table::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mean_abs_shap: f64,
}

/// Features ordered by non-increasing mean |SHAP|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.feature.as_str())
    }
}

pub fn top_features(shap: &ShapMatrix, k: usize) -> FeatureRanking {
    top_features_of(&shap.values, &shap.feature_names, k)
}

/// Top `k` columns of an attribution matrix by mean absolute value; ties go to
/// the lower column index. `k` is capped at the column count.
pub fn top_features_of(values: &Matrix, names: &[String], k: usize) -> FeatureRanking {
    let n = values.rows().max(1) as f64;
    let mut scores: Vec<(usize, f64)> = (0..values.cols())
        .map(|j| {
            let s: f64 = (0..values.rows()).map(|i| values.get(i, j).abs()).sum();
            (j, s / n)
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    FeatureRanking {
        entries: scores
            .into_iter()
            .take(k)
            .map(|(j, s)| RankedFeature { feature: names[j].clone(), mean_abs_shap: s })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankComparison {
    pub jaccard: f64,
    /// `(feature, rank in second - rank in first)` for every shared feature,
    /// in first-ranking order.
    pub rank_deltas: Vec<(String, i64)>,
}

pub fn rank_compare(first: &FeatureRanking, second: &FeatureRanking) -> RankComparison {
    let pos2: BTreeMap<&str, usize> = second.features().enumerate().map(|(i, f)| (f, i)).collect();
    let mut deltas = Vec::new();
    for (i, f) in first.features().enumerate() {
        if let Some(&j) = pos2.get(f) {
            deltas.push((String::from(f), j as i64 - i as i64));
        }
    }
    let union = first.entries.len() + second.entries.len() - deltas.len();
    let jaccard = if union == 0 { 1.0 } else { deltas.len() as f64 / union as f64 };
    RankComparison { jaccard, rank_deltas: deltas }
}
