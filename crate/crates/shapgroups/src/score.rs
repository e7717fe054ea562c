//! Scoring one raw row against a completed run.

use std::collections::BTreeMap;
use std::path::Path;

use shapgroups_core::pipeline::{score_new_patient, ScoreRecord, ServingArtifacts};
use shapgroups_core::preprocess::FittedTransform;
use shapgroups_core::table::ColumnKind;

use crate::error::{Error, Result};
use crate::io::{is_missing, read_json, SchemaEntry};

/// Loaded once, reused for many rows.
pub struct Scorer {
    pub serving: ServingArtifacts,
    pub transform: FittedTransform,
    pub schema: Vec<SchemaEntry>,
}

impl Scorer {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Scorer {
            serving: read_json(&dir.join("model/serving.json"))?,
            transform: read_json(&dir.join("preprocess/transform.json"))?,
            schema: read_json(&dir.join("preprocess/schema.json"))?,
        })
    }

    /// Scores a header plus one data row in the input CSV format. The
    /// target column may be present and is ignored.
    pub fn score_csv(&self, text: &str, source: &str) -> Result<ScoreRecord> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Input(format!("{source}: {e}")))?.clone();
        let records: Vec<csv::StringRecord> =
            rdr.records().collect::<std::result::Result<_, _>>().map_err(|e| Error::Input(format!("{source}: {e}")))?;
        if records.len() != 1 {
            return Err(Error::Input(format!("{source}: expected exactly one data row, found {}", records.len())));
        }
        let mut raw = BTreeMap::new();
        for (name, cell) in header.iter().zip(records[0].iter()) {
            let entry = self
                .schema
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Input(format!("{source}: column `{name}` is not in the schema")))?;
            if entry.kind == ColumnKind::BinaryTarget {
                continue;
            }
            let value = if is_missing(cell) { None } else { Some(cell.to_string()) };
            if raw.insert(name.to_string(), value).is_some() {
                return Err(Error::Input(format!("{source}: header repeats column `{name}`")));
            }
        }
        self.score(&raw).map_err(|e| Error::Input(format!("{source}: {e}")))
    }

    pub fn score(&self, raw: &BTreeMap<String, Option<String>>) -> Result<ScoreRecord> {
        let x = self.transform.apply_row(raw)?;
        Ok(score_new_patient(&self.serving, &x)?)
    }
}
