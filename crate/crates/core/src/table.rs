//! Typed tabular cohorts and dense numeric matrices.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    BinaryTarget,
}

/// Cell storage of one column. `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Continuous(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
    Target(Vec<u8>),
}

impl ColumnData {
    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Continuous(_) => ColumnKind::Continuous,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
            ColumnData::Target(_) => ColumnKind::BinaryTarget,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
            ColumnData::Target(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Continuous(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
            ColumnData::Target(_) => false,
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_missing(i)).count()
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Continuous(v) => ColumnData::Continuous(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
            ColumnData::Target(v) => ColumnData::Target(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn new(name: impl Into<String>, data: ColumnData) -> Self {
        Column { name: name.into(), data }
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }
}

/// Rows by typed columns, exactly one of which is the binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    columns: Vec<Column>,
    row_ids: Vec<u64>,
}

impl FeatureTable {
    /// Builds a table with row ids `0..n`.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.data.len());
        Self::with_row_ids(columns, (0..n as u64).collect())
    }

    pub fn with_row_ids(columns: Vec<Column>, row_ids: Vec<u64>) -> Result<Self> {
        let table = FeatureTable { columns, row_ids };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let n = self.row_ids.len();
        let mut names = BTreeSet::new();
        let mut targets = 0;
        for c in &self.columns {
            if c.data.len() != n {
                return Err(Error::Validation(format!(
                    "column `{}` has {} cells, expected {n}",
                    c.name,
                    c.data.len()
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Validation(format!("duplicate column name `{}`", c.name)));
            }
            match &c.data {
                ColumnData::Target(v) => {
                    targets += 1;
                    if let Some(bad) = v.iter().find(|&&y| y > 1) {
                        return Err(Error::Validation(format!(
                            "target `{}` holds non-binary value {bad}",
                            c.name
                        )));
                    }
                }
                ColumnData::Continuous(v) => {
                    if v.iter().flatten().any(|x| !x.is_finite()) {
                        return Err(Error::Validation(format!(
                            "column `{}` holds a non-finite value",
                            c.name
                        )));
                    }
                }
                ColumnData::Categorical(_) => {}
            }
        }
        if targets != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one binary-target column, found {targets}"
            )));
        }
        let unique: BTreeSet<u64> = self.row_ids.iter().copied().collect();
        if unique.len() != n {
            return Err(Error::Validation("row ids are not unique".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name == name)
    }

    pub fn target_column(&self) -> &Column {
        self.columns
            .iter()
            .find(|c| c.kind() == ColumnKind::BinaryTarget)
            .expect("validated table has a target column")
    }

    pub fn target(&self) -> &[u8] {
        match &self.target_column().data {
            ColumnData::Target(v) => v,
            _ => unreachable!(),
        }
    }

    pub fn target_name(&self) -> &str {
        &self.target_column().name
    }

    /// Non-target columns in table order.
    pub fn features(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| c.kind() != ColumnKind::BinaryTarget)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|c| c.name.clone()).collect()
    }

    pub fn positives(&self) -> usize {
        self.target().iter().filter(|&&y| y == 1).count()
    }

    /// Sub-table of the given row positions, in the given order. Row ids follow the rows.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            columns: self
                .columns
                .iter()
                .map(|c| Column::new(c.name.clone(), c.data.select(rows)))
                .collect(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Removes the named columns; names absent from the table are ignored.
    /// The target column cannot be removed.
    pub fn drop_columns(&mut self, names: &[String]) {
        self.columns
            .retain(|c| c.kind() == ColumnKind::BinaryTarget || !names.contains(&c.name));
    }

    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if self.column(&column.name).is_some() {
            return Err(Error::Validation(format!("column `{}` already exists", column.name)));
        }
        if column.data.len() != self.n_rows() {
            return Err(Error::Shape { expected: self.n_rows(), got: column.data.len() });
        }
        if column.kind() == ColumnKind::BinaryTarget {
            return Err(Error::Validation("a table holds exactly one target column".into()));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn set_row_ids(&mut self, row_ids: Vec<u64>) -> Result<()> {
        if row_ids.len() != self.n_rows() {
            return Err(Error::Shape { expected: self.n_rows(), got: row_ids.len() });
        }
        let unique: BTreeSet<u64> = row_ids.iter().copied().collect();
        if unique.len() != row_ids.len() {
            return Err(Error::Validation("row ids are not unique".into()));
        }
        self.row_ids = row_ids;
        Ok(())
    }

    pub(crate) fn columns_mut(&mut self) -> &mut Vec<Column> {
        &mut self.columns
    }

    /// Dense feature matrix (target excluded). Every feature column must be
    /// continuous and fully observed.
    pub fn feature_matrix(&self) -> Result<Matrix> {
        let cols: Vec<&Column> = self.features().collect();
        let n = self.n_rows();
        let mut data = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            for c in &cols {
                match &c.data {
                    ColumnData::Continuous(v) => match v[i] {
                        Some(x) => data.push(x),
                        None => {
                            return Err(Error::Validation(format!(
                                "column `{}` row {i} is missing",
                                c.name
                            )))
                        }
                    },
                    _ => {
                        return Err(Error::Validation(format!(
                            "column `{}` is not numeric; encode it first",
                            c.name
                        )))
                    }
                }
            }
        }
        Ok(Matrix::new(n, cols.len(), data))
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: rows.len(), cols: self.cols, data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
