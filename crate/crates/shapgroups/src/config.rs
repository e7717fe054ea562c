use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapgroups_core::pipeline::PipelineConfig;
use shapgroups_core::synthetic::{generate_synthetic, SyntheticSpec};
use shapgroups_core::table::FeatureTable;

use crate::error::{Error, Result};
use crate::io::{load_csv, read_json, read_schema, schema_of, SchemaEntry};

/// Where the cohort comes from. Relative paths resolve against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Csv { path: PathBuf, schema: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputSource,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    /// Used when `--outdir` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

pub struct LoadedInput {
    pub table: FeatureTable,
    pub schema: Vec<SchemaEntry>,
}

impl RunConfig {
    pub fn new(input: InputSource, pipeline: PipelineConfig) -> Self {
        RunConfig { input, pipeline, output_dir: None }
    }

    /// Parses a configuration file and anchors its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let InputSource::Csv { path, schema } = &mut cfg.input {
            *path = anchor(base, path);
            *schema = anchor(base, schema);
        }
        if let Some(out) = &mut cfg.output_dir {
            *out = anchor(base, out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate().map_err(|e| Error::Input(format!("invalid configuration: {e}")))?;
        if let InputSource::Synthetic(spec) = &self.input {
            spec.validate().map_err(|e| Error::Input(format!("invalid synthetic spec: {e}")))?;
        }
        Ok(())
    }

    pub fn load_input(&self) -> Result<LoadedInput> {
        match &self.input {
            InputSource::Csv { path, schema } => {
                let schema = read_schema(schema)?;
                let table = load_csv(path, &schema)?;
                Ok(LoadedInput { table, schema })
            }
            InputSource::Synthetic(spec) => {
                let cohort = generate_synthetic(spec).map_err(|e| Error::Input(format!("synthetic spec: {e}")))?;
                for w in &cohort.warnings {
                    eprintln!("warning: {w}");
                }
                let schema = schema_of(&cohort.table);
                Ok(LoadedInput { table: cohort.table, schema })
            }
        }
    }
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
