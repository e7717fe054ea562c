//! Cohort preprocessing: the nine ordered cleaning steps from raw table to
//! leak-free, fully numeric train/test splits.
//!
//! Order is fixed: row filters and configured drops, GCS adjustment,
//! category completion, missingness indicators, stratified split, exclusion
//! by train missing rate, association screening, per-split imputation,
//! ordinal encoding, reindexing. Every decision about *which columns survive*
//! and how categories are coded is taken on the train split alone.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed::rng;
use crate::stats::{chi_squared_test, mann_whitney_u};
use crate::table::{Column, ColumnData, ColumnKind, FeatureTable};
use crate::{Error, Result};

pub const GCS_UNABLE: &str = "gcs_unable_apache";
pub const GCS_COMPONENTS: [&str; 3] = ["gcs_motor", "gcs_verbal", "gcs_eyes"];
pub const INDICATOR_SUFFIX: &str = "_missing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
        }
    }
}

/// Keep-predicate on a continuous column: rows where `column op value` is
/// false are removed. Missing cells are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    pub op: Comparator,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub split_ratio: f64,
    pub missing_rate_threshold: f64,
    pub alpha: f64,
    pub seed: u64,
    pub sentinel_category: String,
    pub gcs_rule_enabled: bool,
    /// Categorical columns whose missing cells receive the sentinel; absent columns are skipped.
    pub category_completion_columns: Vec<String>,
    pub drop_columns: Vec<String>,
    pub row_filters: Vec<RowFilter>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            split_ratio: 0.7,
            missing_rate_threshold: 0.10,
            alpha: 0.05,
            seed: 0,
            sentinel_category: "Unavailable".into(),
            gcs_rule_enabled: true,
            category_completion_columns: alloc::vec![
                "apache_2_bodysystem".into(),
                "apache_3j_bodysystem".into()
            ],
            drop_columns: Vec::new(),
            row_filters: Vec::new(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config("split_ratio must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if !(self.missing_rate_threshold >= 0.0 && self.missing_rate_threshold < 1.0) {
            return Err(Error::Config("missing_rate_threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    Configured,
    MissingRate { rate: f64 },
    Constant,
    /// One outcome class has no observed value for the column.
    Untestable,
    NotAssociated { p_value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub column: String,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationTest {
    ChiSquared,
    MannWhitneyU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub column: String,
    pub test: AssociationTest,
    /// `None` when no valid test exists; `untested` then says why.
    pub p_value: Option<f64>,
    pub retained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub untested: Option<ExclusionReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FillValue {
    Median(f64),
    Mode(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub train: BTreeMap<String, FillValue>,
    pub test: BTreeMap<String, FillValue>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_positives: usize,
    pub test_positives: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub rows_filtered: usize,
    /// Every candidate feature column, indicators included.
    pub input_columns: Vec<String>,
    pub retained: Vec<String>,
    pub excluded: Vec<Exclusion>,
    /// Train missing rate per column that reached the missingness step.
    pub missing_rates: BTreeMap<String, f64>,
    pub associations: Vec<Association>,
    pub imputation: Imputation,
    /// Categories in code order; an unseen category receives `categories.len()`.
    pub encoders: BTreeMap<String, Vec<String>>,
    pub split: SplitSummary,
    /// Original row id of each reindexed row, per split.
    pub train_row_origin: Vec<u64>,
    pub test_row_origin: Vec<u64>,
}

impl PreprocessReport {
    pub fn reason_for(&self, column: &str) -> Option<&ExclusionReason> {
        self.excluded.iter().find(|e| e.column == column).map(|e| &e.reason)
    }
}

/// Train-fit transforms needed to bring a single raw row into model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub gcs_rule_enabled: bool,
    pub completion_columns: Vec<String>,
    pub sentinel_category: String,
    /// Raw feature columns (after configured drops) with their kinds.
    pub raw_columns: Vec<(String, ColumnKind)>,
    /// Final feature order fed to the model.
    pub features: Vec<String>,
    /// Indicator column -> source column.
    pub indicators: BTreeMap<String, String>,
    pub fill: BTreeMap<String, FillValue>,
    pub encoders: BTreeMap<String, Vec<String>>,
}

impl FittedTransform {
    /// Maps a raw row (`None` = missing cell) to the model's feature vector.
    pub fn apply_row(&self, raw: &BTreeMap<String, Option<String>>) -> Result<Vec<f64>> {
        let mut cells: BTreeMap<&str, Option<String>> = BTreeMap::new();
        for (name, _) in &self.raw_columns {
            let v = raw
                .get(name)
                .ok_or_else(|| Error::Schema(format!("row lacks column `{name}`")))?;
            cells.insert(name.as_str(), v.clone());
        }
        let kind_of: BTreeMap<&str, ColumnKind> =
            self.raw_columns.iter().map(|(n, k)| (n.as_str(), *k)).collect();
        for (name, value) in cells.iter() {
            if let (Some(v), Some(ColumnKind::Continuous)) = (value, kind_of.get(name)) {
                parse_number(v).ok_or_else(|| {
                    Error::Schema(format!("column `{name}`: `{v}` is not a number"))
                })?;
            }
        }

        if self.gcs_rule_enabled
            && cells.contains_key(GCS_UNABLE)
            && GCS_COMPONENTS.iter().all(|c| cells.contains_key(c))
        {
            let unable = cells[GCS_UNABLE].as_deref().and_then(parse_number) == Some(1.0);
            if unable {
                for c in GCS_COMPONENTS {
                    cells.insert(c, Some("0".to_string()));
                }
            }
        }
        for c in &self.completion_columns {
            if let Some(slot) = cells.get_mut(c.as_str()) {
                if slot.is_none() {
                    *slot = Some(self.sentinel_category.clone());
                }
            }
        }

        let mut out = Vec::with_capacity(self.features.len());
        for f in &self.features {
            if let Some(source) = self.indicators.get(f) {
                let missing = cells.get(source.as_str()).is_none_or(Option::is_none);
                let level = if missing { "1" } else { "0" };
                out.push(self.encode(f, level));
                continue;
            }
            let value = match cells.get(f.as_str()) {
                Some(Some(v)) => v.clone(),
                Some(None) => match self.fill.get(f) {
                    Some(FillValue::Median(m)) => {
                        out.push(*m);
                        continue;
                    }
                    Some(FillValue::Mode(m)) => m.clone(),
                    None => return Err(Error::Schema(format!("no fill value for `{f}`"))),
                },
                None => return Err(Error::Schema(format!("row lacks column `{f}`"))),
            };
            if self.encoders.contains_key(f) {
                out.push(self.encode(f, &value));
            } else {
                out.push(parse_number(&value).ok_or_else(|| {
                    Error::Schema(format!("column `{f}`: `{value}` is not a number"))
                })?);
            }
        }
        Ok(out)
    }

    fn encode(&self, column: &str, level: &str) -> f64 {
        let cats = &self.encoders[column];
        encode_level(cats, level) as f64
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn encode_level(categories: &[String], level: &str) -> usize {
    categories
        .binary_search_by(|c| c.as_str().cmp(level))
        .unwrap_or(categories.len())
}

/// Output of [`preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub train: FeatureTable,
    pub test: FeatureTable,
    pub report: PreprocessReport,
    pub transform: FittedTransform,
}

/// Runs the full ordered preprocessing on a raw cohort.
pub fn preprocess(raw: &FeatureTable, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let mut report = PreprocessReport { rows_in: raw.n_rows(), ..Default::default() };

    let (mut table, removed) = apply_row_filters(raw, &cfg.row_filters)?;
    report.rows_filtered = removed;
    for name in &cfg.drop_columns {
        if table.column(name).is_some() && table.target_name() != name {
            report.input_columns.push(name.clone());
            report
                .excluded
                .push(Exclusion { column: name.clone(), reason: ExclusionReason::Configured });
        }
    }
    table.drop_columns(&cfg.drop_columns);
    let raw_columns: Vec<(String, ColumnKind)> =
        table.features().map(|c| (c.name.clone(), c.kind())).collect();

    if cfg.gcs_rule_enabled {
        table = adjust_gcs(table);
    }
    table = complete_categories(table, &cfg.category_completion_columns, &cfg.sentinel_category)?;
    let before: BTreeSet<String> = table.feature_names().into_iter().collect();
    table = add_missingness_indicators(table)?;
    let indicators: BTreeMap<String, String> = table
        .feature_names()
        .into_iter()
        .filter(|n| !before.contains(n))
        .map(|n| {
            let source = n[..n.len() - INDICATOR_SUFFIX.len()].to_string();
            (n, source)
        })
        .collect();
    report.input_columns.extend(table.feature_names());

    let (train, test) = stratified_split(&table, cfg.split_ratio, cfg.seed)?;
    report.split = SplitSummary {
        train_rows: train.n_rows(),
        test_rows: test.n_rows(),
        train_positives: train.positives(),
        test_positives: test.positives(),
    };

    let (train, test, rates) = exclude_by_missingness(train, test, cfg.missing_rate_threshold);
    for (name, rate) in &rates {
        if *rate > cfg.missing_rate_threshold {
            report
                .excluded
                .push(Exclusion { column: name.clone(), reason: ExclusionReason::MissingRate { rate: *rate } });
        }
    }
    report.missing_rates = rates;

    let (train, test, associations) = select_by_association(train, test, cfg.alpha)?;
    for a in &associations {
        if !a.retained {
            let reason = match (a.p_value, &a.untested) {
                (Some(p), _) => ExclusionReason::NotAssociated { p_value: p },
                (None, Some(r)) => r.clone(),
                (None, None) => ExclusionReason::Constant,
            };
            report.excluded.push(Exclusion { column: a.column.clone(), reason });
        }
    }
    report.associations = associations;

    let (train, test, imputation) = impute(train, test)?;
    let (train, test, encoders) = ordinal_encode(train, test);
    let (train, test, train_origin, test_origin) = reindex(train, test);

    report.retained = train.feature_names();
    report.imputation = imputation;
    report.encoders = encoders;
    report.train_row_origin = train_origin;
    report.test_row_origin = test_origin;

    let transform = FittedTransform {
        gcs_rule_enabled: cfg.gcs_rule_enabled,
        completion_columns: cfg.category_completion_columns.clone(),
        sentinel_category: cfg.sentinel_category.clone(),
        raw_columns,
        features: report.retained.clone(),
        indicators: indicators
            .into_iter()
            .filter(|(n, _)| report.retained.contains(n))
            .collect(),
        fill: report.imputation.train.clone(),
        encoders: report.encoders.clone(),
    };
    Ok(Preprocessed { train, test, report, transform })
}

/// Removes rows failing any keep-predicate. Returns the filtered table and
/// the number of removed rows.
pub fn apply_row_filters(table: &FeatureTable, filters: &[RowFilter]) -> Result<(FeatureTable, usize)> {
    if filters.is_empty() {
        return Ok((table.clone(), 0));
    }
    let mut keep: Vec<usize> = (0..table.n_rows()).collect();
    for f in filters {
        let col = table
            .column(&f.column)
            .ok_or_else(|| Error::Config(format!("row filter column `{}` not found", f.column)))?;
        let ColumnData::Continuous(values) = &col.data else {
            return Err(Error::Config(format!("row filter column `{}` is not continuous", f.column)));
        };
        keep.retain(|&i| values[i].is_none_or(|v| f.op.holds(v, f.value)));
    }
    let removed = table.n_rows() - keep.len();
    Ok((table.select_rows(&keep), removed))
}

/// Rows with `gcs_unable_apache = 1` get all three GCS components set to 0.
/// A no-op unless all four columns exist.
pub fn adjust_gcs(mut table: FeatureTable) -> FeatureTable {
    if table.column(GCS_UNABLE).is_none() || GCS_COMPONENTS.iter().any(|c| table.column(c).is_none()) {
        return table;
    }
    let flagged: Vec<bool> = match &table.column(GCS_UNABLE).unwrap().data {
        ColumnData::Continuous(v) => v.iter().map(|x| *x == Some(1.0)).collect(),
        ColumnData::Categorical(v) => v
            .iter()
            .map(|x| x.as_deref().and_then(parse_number) == Some(1.0))
            .collect(),
        ColumnData::Target(v) => v.iter().map(|&x| x == 1).collect(),
    };
    for name in GCS_COMPONENTS {
        let col = table.column_mut(name).unwrap();
        match &mut col.data {
            ColumnData::Continuous(v) => {
                for (cell, &f) in v.iter_mut().zip(&flagged) {
                    if f {
                        *cell = Some(0.0);
                    }
                }
            }
            ColumnData::Categorical(v) => {
                for (cell, &f) in v.iter_mut().zip(&flagged) {
                    if f {
                        *cell = Some("0".into());
                    }
                }
            }
            ColumnData::Target(_) => {}
        }
    }
    table
}

/// Fills missing cells of the named categorical columns with `sentinel`.
/// Names absent from the table are skipped.
pub fn complete_categories(
    mut table: FeatureTable,
    columns: &[String],
    sentinel: &str,
) -> Result<FeatureTable> {
    for name in columns {
        let Some(col) = table.column_mut(name) else { continue };
        match &mut col.data {
            ColumnData::Categorical(v) => {
                for cell in v.iter_mut().filter(|c| c.is_none()) {
                    *cell = Some(sentinel.into());
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "category completion targets `{name}`, which is not categorical"
                )))
            }
        }
    }
    Ok(table)
}

/// Appends a `{name}_missing` categorical indicator ("1" missing, "0"
/// observed) for every non-target column, constant indicators included.
pub fn add_missingness_indicators(mut table: FeatureTable) -> Result<FeatureTable> {
    let new: Vec<Column> = table
        .features()
        .map(|c| {
            let flags = (0..c.data.len())
                .map(|i| Some(if c.data.is_missing(i) { "1" } else { "0" }.to_string()))
                .collect();
            Column::new(format!("{}{INDICATOR_SUFFIX}", c.name), ColumnData::Categorical(flags))
        })
        .collect();
    for c in new {
        table.push_column(c)?;
    }
    Ok(table)
}

/// Per-class largest-remainder stratified partition of `y`.
///
/// Class `c` of size `n_c` sends `floor(ratio * n_c)` rows to the first part;
/// the remaining `round(ratio * n) - sum floor` slots go to the classes with
/// the largest fractional remainders (lower class first on ties). Rows are
/// drawn by shuffling each class with one seeded stream. Both parts are
/// returned in ascending row order.
pub fn stratified_indices(y: &[u8], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &v) in y.iter().enumerate() {
        classes[(v == 1) as usize].push(i);
    }
    if classes[0].is_empty() || classes[1].is_empty() {
        return Err(Error::Stratification("both target classes must be present".into()));
    }
    let quotas: [f64; 2] = [ratio * classes[0].len() as f64, ratio * classes[1].len() as f64];
    let mut counts: [usize; 2] = [libm::floor(quotas[0] + 1e-9) as usize, libm::floor(quotas[1] + 1e-9) as usize];
    let total = libm::round(ratio * y.len() as f64) as usize;
    let mut left = total.saturating_sub(counts[0] + counts[1]);
    let mut by_remainder = [0usize, 1usize];
    let rem = |c: usize| (quotas[c] - counts[c] as f64).max(0.0);
    by_remainder.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &c in &by_remainder {
        if left > 0 && counts[c] < classes[c].len() {
            counts[c] += 1;
            left -= 1;
        }
    }

    let mut rng = rng(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for c in 0..2 {
        let mut members = classes[c].clone();
        members.shuffle(&mut rng);
        first.extend_from_slice(&members[..counts[c]]);
        second.extend_from_slice(&members[counts[c]..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

pub fn stratified_split(table: &FeatureTable, ratio: f64, seed: u64) -> Result<(FeatureTable, FeatureTable)> {
    if table.n_rows() < 4 {
        return Err(Error::Stratification(format!("need at least 4 rows, got {}", table.n_rows())));
    }
    let (train, test) = stratified_indices(table.target(), ratio, seed)?;
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

/// Drops columns whose train missing rate exceeds `threshold` (strictly)
/// from both splits. Returns the train rate of every feature column.
pub fn exclude_by_missingness(
    mut train: FeatureTable,
    mut test: FeatureTable,
    threshold: f64,
) -> (FeatureTable, FeatureTable, BTreeMap<String, f64>) {
    let n = train.n_rows().max(1) as f64;
    let rates: BTreeMap<String, f64> = train
        .features()
        .map(|c| (c.name.clone(), c.data.missing_count() as f64 / n))
        .collect();
    let drop: Vec<String> = train
        .features()
        .filter(|c| rates[&c.name] > threshold)
        .map(|c| c.name.clone())
        .collect();
    train.drop_columns(&drop);
    test.drop_columns(&drop);
    (train, test, rates)
}

/// Screens every feature against the train outcome: chi-squared for
/// categorical columns, Mann-Whitney U for continuous ones, on observed
/// cells only. Columns with `p >= alpha`, a single observed level, or an
/// outcome class without observations are removed from both splits.
pub fn select_by_association(
    mut train: FeatureTable,
    mut test: FeatureTable,
    alpha: f64,
) -> Result<(FeatureTable, FeatureTable, Vec<Association>)> {
    let y = train.target().to_vec();
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Stratification("train split lacks an outcome class".into()));
    }
    let mut out = Vec::new();
    for c in train.features() {
        let (test_kind, outcome) = match &c.data {
            ColumnData::Categorical(v) => {
                let (levels, ys): (Vec<&str>, Vec<u8>) = v
                    .iter()
                    .zip(&y)
                    .filter_map(|(cell, &yi)| cell.as_deref().map(|s| (s, yi)))
                    .unzip();
                let distinct: BTreeSet<&str> = levels.iter().copied().collect();
                let outcome = if distinct.len() < 2 {
                    Err(ExclusionReason::Constant)
                } else if !ys.contains(&0) || !ys.contains(&1) {
                    Err(ExclusionReason::Untestable)
                } else {
                    chi_squared_test(&levels, &ys)
                        .map(|r| r.p_value)
                        .map_err(|_| ExclusionReason::Constant)
                };
                (AssociationTest::ChiSquared, outcome)
            }
            ColumnData::Continuous(v) => {
                let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for (cell, &yi) in v.iter().zip(&y) {
                    if let Some(x) = cell {
                        groups[yi as usize].push(*x);
                    }
                }
                let all = groups[0].iter().chain(&groups[1]);
                let first = groups[0].first().or(groups[1].first()).copied();
                let constant = first.is_none_or(|f| all.clone().all(|&x| x == f));
                let outcome = if constant {
                    Err(ExclusionReason::Constant)
                } else if groups[0].is_empty() || groups[1].is_empty() {
                    Err(ExclusionReason::Untestable)
                } else {
                    Ok(mann_whitney_u(&groups[0], &groups[1]).p_value)
                };
                (AssociationTest::MannWhitneyU, outcome)
            }
            ColumnData::Target(_) => continue,
        };
        let (p_value, retained, untested) = match outcome {
            Ok(p) => (Some(p), p < alpha, None),
            Err(reason) => (None, false, Some(reason)),
        };
        out.push(Association { column: c.name.clone(), test: test_kind, p_value, retained, untested });
    }
    let drop: Vec<String> = out.iter().filter(|a| !a.retained).map(|a| a.column.clone()).collect();
    train.drop_columns(&drop);
    test.drop_columns(&drop);
    Ok((train, test, out))
}

fn median_fill(values: &[Option<f64>]) -> Option<f64> {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    crate::math::median(&observed)
}

/// Most frequent observed level; ties go to the lexicographically smallest.
fn mode_fill(values: &[Option<String>]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values.iter().flatten() {
        *counts.entry(v.as_str()).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (level, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((level, n));
        }
    }
    best.map(|(l, _)| l.to_string())
}

fn impute_split(table: &mut FeatureTable) -> Result<BTreeMap<String, FillValue>> {
    let mut fills = BTreeMap::new();
    for col in table.columns_mut().iter_mut() {
        match &mut col.data {
            ColumnData::Continuous(v) => {
                let m = median_fill(v).ok_or_else(|| Error::Imputation(col.name.clone()))?;
                for cell in v.iter_mut().filter(|c| c.is_none()) {
                    *cell = Some(m);
                }
                fills.insert(col.name.clone(), FillValue::Median(m));
            }
            ColumnData::Categorical(v) => {
                let m = mode_fill(v).ok_or_else(|| Error::Imputation(col.name.clone()))?;
                for cell in v.iter_mut().filter(|c| c.is_none()) {
                    *cell = Some(m.clone());
                }
                fills.insert(col.name.clone(), FillValue::Mode(m));
            }
            ColumnData::Target(_) => {}
        }
    }
    Ok(fills)
}

/// Median (continuous) or mode (categorical) imputation, with statistics
/// computed separately inside each split.
pub fn impute(mut train: FeatureTable, mut test: FeatureTable) -> Result<(FeatureTable, FeatureTable, Imputation)> {
    let train_fill = impute_split(&mut train)?;
    let test_fill = if test.n_rows() == 0 { BTreeMap::new() } else { impute_split(&mut test)? };
    Ok((train, test, Imputation { train: train_fill, test: test_fill }))
}

/// Ordinal codes fit on train levels (sorted, from 0); test levels unseen in
/// train map to the reserved code `levels.len()`. Encoded columns become
/// continuous. Cells must be observed.
pub fn ordinal_encode(
    mut train: FeatureTable,
    mut test: FeatureTable,
) -> (FeatureTable, FeatureTable, BTreeMap<String, Vec<String>>) {
    let mut maps = BTreeMap::new();
    for col in train.columns_mut().iter_mut() {
        if let ColumnData::Categorical(v) = &col.data {
            let levels: BTreeSet<&str> = v.iter().flatten().map(String::as_str).collect();
            let levels: Vec<String> = levels.into_iter().map(String::from).collect();
            maps.insert(col.name.clone(), levels);
        }
    }
    let encode = |table: &mut FeatureTable| {
        for col in table.columns_mut().iter_mut() {
            if let (ColumnData::Categorical(v), Some(levels)) = (&col.data, maps.get(&col.name)) {
                let coded = v
                    .iter()
                    .map(|c| c.as_deref().map(|s| encode_level(levels, s) as f64))
                    .collect();
                col.data = ColumnData::Continuous(coded);
            }
        }
    };
    encode(&mut train);
    encode(&mut test);
    (train, test, maps)
}

/// Assigns row ids `0..n` within each split, keeping row order. Returns the
/// original id of every new position.
pub fn reindex(
    mut train: FeatureTable,
    mut test: FeatureTable,
) -> (FeatureTable, FeatureTable, Vec<u64>, Vec<u64>) {
    let train_origin = train.row_ids().to_vec();
    let test_origin = test.row_ids().to_vec();
    train.set_row_ids((0..train.n_rows() as u64).collect()).expect("fresh ids are unique");
    test.set_row_ids((0..test.n_rows() as u64).collect()).expect("fresh ids are unique");
    (train, test, train_origin, test_origin)
}
