//! CSV tables, column schemas and JSON helpers.
//!
//! Cells that are empty or exactly `NA` are missing. The target column must
//! hold `0` or `1` in every row.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use shapgroups_core::table::{Column, ColumnData, ColumnKind, FeatureTable};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    pub kind: ColumnKind,
}

pub fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    serde_json::from_slice(&bytes).map_err(Error::json(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn validate_schema(schema: &[SchemaEntry]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for e in schema {
        if !seen.insert(e.name.as_str()) {
            return Err(Error::Input(format!("schema lists `{}` twice", e.name)));
        }
    }
    let targets = schema.iter().filter(|e| e.kind == ColumnKind::BinaryTarget).count();
    if targets != 1 {
        return Err(Error::Input(format!("schema needs exactly one binary-target column, found {targets}")));
    }
    Ok(())
}

pub fn read_schema(path: &Path) -> Result<Vec<SchemaEntry>> {
    let schema: Vec<SchemaEntry> = read_json(path)?;
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn schema_of(table: &FeatureTable) -> Vec<SchemaEntry> {
    table.columns().iter().map(|c| SchemaEntry { name: c.name.clone(), kind: c.kind() }).collect()
}

pub fn load_csv(path: &Path, schema: &[SchemaEntry]) -> Result<FeatureTable> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    parse_csv(file, schema, &path.display().to_string())
}

/// Reads a headed CSV into a typed table. The header must name every schema
/// column exactly once and nothing else; column order is free. Row ids are
/// `0..n` in file order.
pub fn parse_csv<R: Read>(reader: R, schema: &[SchemaEntry], source: &str) -> Result<FeatureTable> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Input(format!("{source}: {e}")))?.clone();
    let mut position: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in header.iter().enumerate() {
        if position.insert(name, i).is_some() {
            return Err(Error::Input(format!("{source}: header repeats column `{name}`")));
        }
        if !schema.iter().any(|e| e.name == name) {
            return Err(Error::Input(format!("{source}: column `{name}` is not in the schema")));
        }
    }
    if let Some(e) = schema.iter().find(|e| !position.contains_key(e.name.as_str())) {
        return Err(Error::Input(format!("{source}: schema column `{}` is missing from the header", e.name)));
    }

    let mut data: Vec<ColumnData> = schema
        .iter()
        .map(|e| match e.kind {
            ColumnKind::Continuous => ColumnData::Continuous(Vec::new()),
            ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
            ColumnKind::BinaryTarget => ColumnData::Target(Vec::new()),
        })
        .collect();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Input(format!("{source}: row {row}: {e}")))?;
        for (entry, column) in schema.iter().zip(data.iter_mut()) {
            let cell = record.get(position[entry.name.as_str()]).unwrap_or("");
            let bad = |what: &str| Error::Input(format!("{source}: row {row}, column `{}`: {what}", entry.name));
            match column {
                ColumnData::Continuous(v) => v.push(if is_missing(cell) {
                    None
                } else {
                    let x: f64 = cell.trim().parse().map_err(|_| bad(&format!("`{cell}` is not a number")))?;
                    if !x.is_finite() {
                        return Err(bad(&format!("`{cell}` is not finite")));
                    }
                    Some(x)
                }),
                ColumnData::Categorical(v) => v.push(if is_missing(cell) { None } else { Some(cell.to_string()) }),
                ColumnData::Target(v) => v.push(match cell.trim() {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(bad(&format!("target must be 0 or 1, got `{other}`"))),
                }),
            }
        }
    }
    let columns = schema.iter().zip(data).map(|(e, d)| Column::new(e.name.clone(), d)).collect();
    Ok(FeatureTable::new(columns)?)
}

pub fn format_cell(data: &ColumnData, row: usize) -> String {
    match data {
        ColumnData::Continuous(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
        ColumnData::Categorical(v) => v[row].clone().unwrap_or_default(),
        ColumnData::Target(v) => v[row].to_string(),
    }
}

/// Writes every column in table order; missing cells are empty.
pub fn write_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    w.write_record(table.columns().iter().map(|c| c.name.as_str())).map_err(to_err)?;
    for i in 0..table.n_rows() {
        w.write_record(table.columns().iter().map(|c| format_cell(&c.data, i))).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    write_file(path, &bytes)
}

/// Writes a numeric table: a header then one record per row.
pub fn write_records(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    write_file(path, &bytes)
}

/// Header plus string records of a CSV file.
pub fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let header = rdr.headers().map_err(err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Column lookup over the output of [`read_records`].
pub struct Records {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    source: String,
}

impl Records {
    pub fn read(path: &Path) -> Result<Self> {
        let (header, rows) = read_records(path)?;
        Ok(Records { header, rows, source: path.display().to_string() })
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("{}: no column `{name}`", self.source)))
    }

    pub fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let cell = &self.rows[row][col];
        cell.parse().map_err(|_| {
            Error::Input(format!("{}: row {}, column `{}`: cannot parse `{cell}`", self.source, row + 1, self.header[col]))
        })
    }

    pub fn column<T: std::str::FromStr>(&self, name: &str) -> Result<Vec<T>> {
        let c = self.index(name)?;
        (0..self.rows.len()).map(|r| self.parse(r, c)).collect()
    }
}
