//! Planted-subgroup cohort generator used as a stand-in for restricted data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::sigmoid;
use crate::seed::{derive_seed, rng};
use crate::table::{Column, ColumnData, FeatureTable};
use crate::{Error, Result};

const INTERCEPT_BOUND: f64 = 40.0;
const PREVALENCE_TOLERANCE: f64 = 1e-3;
pub const TARGET_NAME: &str = "outcome";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSubgroup {
    /// Relative share of rows.
    pub weight: f64,
    pub feature_means: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Missingness {
    None,
    Random { rate: f64 },
    OutcomeLinked { rate_if_negative: f64, rate_if_positive: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_features: usize,
    pub subgroups: Vec<PlantedSubgroup>,
    #[serde(default = "no_missingness")]
    pub missingness: Missingness,
    /// Feature indices exposed to missingness; all features when absent.
    #[serde(default)]
    pub missing_columns: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
}

fn no_missingness() -> Missingness {
    Missingness::None
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub table: FeatureTable,
    pub planted: Vec<usize>,
    pub intercepts: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn feature_name(j: usize) -> String {
    format!("x{j}")
}

impl SyntheticSpec {
    pub fn n_planted_subgroups(&self) -> usize {
        self.subgroups.len()
    }

    /// Two equally sized subgroups whose outcomes depend on disjoint
    /// feature blocks: the first on `x0..x{k-1}`, the second on
    /// `x{k}..x{2k-1}`, with `k = min(4, n_features / 3)`. The remaining
    /// features carry no outcome effect and are shifted by +3 / -3 to mark
    /// membership. Prevalences are 0.4 and 0.1.
    pub fn two_mechanism(n_rows: usize, n_features: usize, seed: u64) -> Self {
        const EFFECTS: [f64; 4] = [1.0, 0.8, 0.8, 0.6];
        const SHIFT: f64 = 3.0;
        let k = (n_features / 3).clamp(1, EFFECTS.len()).min(n_features);
        let mut means_a = vec![0.0; n_features];
        let mut means_b = vec![0.0; n_features];
        let mut beta_a = vec![0.0; n_features];
        let mut beta_b = vec![0.0; n_features];
        for (j, &e) in EFFECTS.iter().take(k).enumerate() {
            beta_a[j] = e;
            if j + k < n_features {
                beta_b[j + k] = e;
            }
        }
        for j in (2 * k).min(n_features)..n_features {
            means_a[j] = SHIFT;
            means_b[j] = -SHIFT;
        }
        SyntheticSpec {
            n_rows,
            n_features,
            subgroups: vec![
                PlantedSubgroup { weight: 0.5, feature_means: means_a, coefficients: beta_a, prevalence: 0.4 },
                PlantedSubgroup { weight: 0.5, feature_means: means_b, coefficients: beta_b, prevalence: 0.1 },
            ],
            missingness: Missingness::None,
            missing_columns: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_features == 0 {
            return Err(Error::Config("n_rows and n_features must be positive".into()));
        }
        if self.subgroups.is_empty() {
            return Err(Error::Config("at least one planted subgroup is required".into()));
        }
        for (g, s) in self.subgroups.iter().enumerate() {
            if s.feature_means.len() != self.n_features || s.coefficients.len() != self.n_features {
                return Err(Error::Config(format!("subgroup {g}: vectors must have length {}", self.n_features)));
            }
            if !(s.prevalence > 0.0 && s.prevalence < 1.0) {
                return Err(Error::Config(format!("subgroup {g}: prevalence must lie in (0, 1)")));
            }
            if !(s.weight > 0.0) || !s.weight.is_finite() {
                return Err(Error::Config(format!("subgroup {g}: weight must be positive")));
            }
            if s.feature_means.iter().chain(&s.coefficients).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("subgroup {g}: non-finite parameter")));
            }
        }
        for a in 0..self.subgroups.len() {
            for b in a + 1..self.subgroups.len() {
                if self.subgroups[a].coefficients == self.subgroups[b].coefficients {
                    return Err(Error::Config(format!("subgroups {a} and {b} share a coefficient vector")));
                }
            }
        }
        let rate_ok = |r: f64| (0.0..1.0).contains(&r);
        match self.missingness {
            Missingness::None => {}
            Missingness::Random { rate } if rate_ok(rate) => {}
            Missingness::OutcomeLinked { rate_if_negative, rate_if_positive }
                if rate_ok(rate_if_negative) && rate_ok(rate_if_positive) => {}
            _ => return Err(Error::Config("missingness rates must lie in [0, 1)".into())),
        }
        if let Some(cols) = &self.missing_columns {
            if cols.iter().any(|&j| j >= self.n_features) {
                return Err(Error::Config("missing_columns index out of range".into()));
            }
        }
        Ok(())
    }
}

/// Row counts per subgroup by largest remainder on the weights.
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(q + 1e-9) as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &g in order.iter().take(short) {
        counts[g] += 1;
    }
    counts
}

/// Intercept such that the mean predicted probability over `scores`
/// equals `target`, by bisection.
fn solve_intercept(scores: &[f64], target: f64) -> (f64, f64) {
    let mean = |c: f64| scores.iter().map(|s| sigmoid(c + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-INTERCEPT_BOUND, INTERCEPT_BOUND);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    (c, mean(c))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let n = spec.n_rows;
    let d = spec.n_features;
    let weights: Vec<f64> = spec.subgroups.iter().map(|s| s.weight).collect();
    let counts = allocate(n, &weights);

    let mut planted: Vec<usize> = counts.iter().enumerate().flat_map(|(g, &c)| core::iter::repeat_n(g, c)).collect();
    planted.shuffle(&mut rng(derive_seed(spec.seed, 1)));

    let mut noise = rng(derive_seed(spec.seed, 2));
    let mut x = vec![0.0; n * d];
    for i in 0..n {
        let means = &spec.subgroups[planted[i]].feature_means;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut noise);
            x[i * d + j] = means[j] + z;
        }
    }

    let linear = |i: usize| -> f64 {
        let beta = &spec.subgroups[planted[i]].coefficients;
        (0..d).map(|j| beta[j] * x[i * d + j]).sum()
    };
    let mut intercepts = Vec::with_capacity(spec.subgroups.len());
    let mut warnings = Vec::new();
    for (g, sub) in spec.subgroups.iter().enumerate() {
        let scores: Vec<f64> = (0..n).filter(|&i| planted[i] == g).map(linear).collect();
        if scores.is_empty() {
            warnings.push(format!("subgroup {g} received no rows"));
            intercepts.push(0.0);
            continue;
        }
        let (c, achieved) = solve_intercept(&scores, sub.prevalence);
        if (achieved - sub.prevalence).abs() > PREVALENCE_TOLERANCE {
            warnings.push(format!(
                "subgroup {g}: prevalence {} unreachable, expected {achieved:.4} instead",
                sub.prevalence
            ));
        }
        intercepts.push(c);
    }

    let mut outcome_rng = rng(derive_seed(spec.seed, 3));
    let y: Vec<u8> = (0..n)
        .map(|i| {
            let p = sigmoid(intercepts[planted[i]] + linear(i));
            u8::from(outcome_rng.gen::<f64>() < p)
        })
        .collect();

    let mut cells: Vec<Vec<Option<f64>>> = (0..d).map(|j| (0..n).map(|i| Some(x[i * d + j])).collect()).collect();
    if spec.missingness != Missingness::None {
        let exposed: Vec<usize> = spec.missing_columns.clone().unwrap_or_else(|| (0..d).collect());
        let mut miss_rng = rng(derive_seed(spec.seed, 4));
        for i in 0..n {
            let rate = match spec.missingness {
                Missingness::None => 0.0,
                Missingness::Random { rate } => rate,
                Missingness::OutcomeLinked { rate_if_negative, rate_if_positive } => {
                    if y[i] == 1 {
                        rate_if_positive
                    } else {
                        rate_if_negative
                    }
                }
            };
            for &j in &exposed {
                if miss_rng.gen::<f64>() < rate {
                    cells[j][i] = None;
                }
            }
        }
    }

    let mut columns: Vec<Column> =
        cells.into_iter().enumerate().map(|(j, c)| Column::new(feature_name(j), ColumnData::Continuous(c))).collect();
    columns.push(Column::new(TARGET_NAME, ColumnData::Target(y)));
    let table = FeatureTable::new(columns)?;
    Ok(SyntheticCohort { table, planted, intercepts, warnings })
}
