//! Plot-ready tables derived from a completed run. Re-emission over the
//! same artifacts is byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::artifacts::{RunOutcome, RunReport, PLOTS_DIR};
use crate::error::{Error, Result};
use crate::io::{write_json, write_records, Records};

/// Rows per ranking table.
pub const RANKING_ROWS: usize = 5;

/// Writes `plots/embedding.csv`, one `plots/rankings/ranking_<model>_on_<slice>.csv`
/// per reported ranking and `plots/comparisons.json`. Returns the written paths.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let report = RunReport::load(dir)?;
    if let RunOutcome::Failed { stage, .. } = &report.outcome {
        return Err(Error::Input(format!("run failed at stage `{}`; nothing to plot", stage.name())));
    }
    let out = dir.join(PLOTS_DIR);
    let mut written = Vec::new();

    let coords = Records::read(&dir.join("embedding/coords.csv"))?;
    let assign = Records::read(&dir.join("clusters/assignments.csv"))?;
    let rows = Records::read(&dir.join("preprocess/rows.csv"))?;
    let key = |r: &Records, i: usize| -> Result<(String, u64)> {
        Ok((r.rows[i][r.index("split")?].clone(), r.parse(i, r.index("row_id")?)?))
    };
    let mut origin: BTreeMap<(String, u64), String> = BTreeMap::new();
    let oc = rows.index("origin")?;
    for i in 0..rows.rows.len() {
        origin.insert(key(&rows, i)?, rows.rows[i][oc].clone());
    }
    let mut labels: BTreeMap<(String, u64), (i64, String)> = BTreeMap::new();
    let (lc, sc) = (assign.index("label")?, assign.index("strength")?);
    for i in 0..assign.rows.len() {
        labels.insert(key(&assign, i)?, (assign.parse(i, lc)?, assign.rows[i][sc].clone()));
    }
    let (xc, yc) = (coords.index("x")?, coords.index("y")?);
    let mut table = Vec::with_capacity(coords.rows.len());
    for i in 0..coords.rows.len() {
        let k = key(&coords, i)?;
        let (label, strength) =
            labels.get(&k).ok_or_else(|| Error::Input(format!("no cluster label for {} row {}", k.0, k.1)))?;
        let subgroup = report
            .subgroups
            .iter()
            .find(|s| s.labels.contains(label))
            .map(|s| s.name.clone())
            .unwrap_or_else(|| "none".into());
        table.push(vec![
            k.0.clone(),
            k.1.to_string(),
            origin.get(&k).cloned().unwrap_or_default(),
            coords.rows[i][xc].clone(),
            coords.rows[i][yc].clone(),
            label.to_string(),
            strength.clone(),
            subgroup,
        ]);
    }
    let header: Vec<String> =
        ["split", "row_id", "origin", "x", "y", "cluster", "strength", "subgroup"].map(String::from).to_vec();
    let path = out.join("embedding.csv");
    write_records(&path, &header, table.into_iter())?;
    written.push(path);

    let header: Vec<String> = ["rank", "feature", "mean_abs_shap"].map(String::from).to_vec();
    for r in &report.rankings {
        let path = out.join("rankings").join(format!("ranking_{}_on_{}.csv", r.model, r.slice));
        let rows = r.ranking.entries.iter().take(RANKING_ROWS).enumerate().map(|(i, e)| {
            vec![(i + 1).to_string(), e.feature.clone(), e.mean_abs_shap.to_string()]
        });
        write_records(&path, &header, rows)?;
        written.push(path);
    }

    let path = out.join("comparisons.json");
    write_json(&path, &report.comparisons)?;
    written.push(path);
    Ok(written)
}
