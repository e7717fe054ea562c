//! Writes a synthetic cohort next to its schema and planted labels.

use std::path::{Path, PathBuf};

use shapgroups_core::synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::io::{read_json, schema_of, write_csv, write_json, write_records};

pub struct SynthOutput {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub planted: PathBuf,
    pub warnings: Vec<String>,
}

/// For `out = dir/cohort.csv` writes `dir/cohort.csv`, `dir/cohort.schema.json`
/// and `dir/cohort.planted.csv` (`row_id,planted`).
pub fn synthesize(spec: &SyntheticSpec, out: &Path) -> Result<SynthOutput> {
    let cohort = generate_synthetic(spec).map_err(|e| Error::Input(format!("synthetic spec: {e}")))?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("cohort").to_string();
    let dir = out.parent().unwrap_or(Path::new("."));
    let schema = dir.join(format!("{stem}.schema.json"));
    let planted = dir.join(format!("{stem}.planted.csv"));
    write_csv(out, &cohort.table)?;
    write_json(&schema, &schema_of(&cohort.table))?;
    let rows = cohort.planted.iter().enumerate().map(|(i, g)| vec![i.to_string(), g.to_string()]);
    write_records(&planted, &["row_id".into(), "planted".into()], rows)?;
    Ok(SynthOutput { csv: out.to_path_buf(), schema, planted, warnings: cohort.warnings })
}

pub fn synthesize_from(spec_path: &Path, out: &Path) -> Result<SynthOutput> {
    let spec: SyntheticSpec = read_json(spec_path)?;
    synthesize(&spec, out)
}
