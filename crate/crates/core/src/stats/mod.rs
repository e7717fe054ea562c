//! Evaluation metrics, resampling and significance tests.

mod ari;
mod bootstrap;
mod chi2;
mod metrics;
mod mwu;
mod ranking;

pub use ari::adjusted_rand_index;
pub use bootstrap::{bootstrap_metrics, Metric, MetricSamples, MAX_REDRAWS};
pub use chi2::{chi_squared_sf, chi_squared_test, ChiSquared};
pub use metrics::{auprc, log_loss, LOG_LOSS_EPS};
pub use mwu::{mann_whitney_u, significance_stars, ComparisonResult, TestMethod};
pub use ranking::{rank_compare, top_features, top_features_of, FeatureRanking, RankComparison, RankedFeature};
