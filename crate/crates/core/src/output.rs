//! CSV and JSON artifacts keyed by a configuration hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::metrics::{ConvergedSummary, RunSeries};
use crate::scenario::ScenarioConfig;
use crate::sim::StrategyKind;

/// First 16 hex digits of the SHA-256 of the canonical config JSON.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(hex::encode(digest)[..16].to_string())
}

pub fn csv_header(mcsps: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "run_id".into(), "strategy".into(), "social_welfare".into()];
    h.extend((0..mcsps).map(|i| format!("mcsp_utility_{i}")));
    h.extend(
        ["mu_utility_mean", "completion_ratio", "cum_collisions", "energy", "perception_error"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// One row per `(run, t)`; perception error is empty when not tracked.
pub fn write_csv<W: Write>(out: W, runs: &[RunSeries], mcsps: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(mcsps))?;
    for run in runs {
        let cum = run.cum_collisions();
        for (row, c) in run.rows.iter().zip(cum) {
            let mut rec = vec![
                row.t.to_string(),
                run.run_id.to_string(),
                run.strategy.name().to_string(),
                row.social_welfare.to_string(),
            ];
            rec.extend(row.mcsp_utility.iter().map(f64::to_string));
            rec.push(row.mu_utility_mean.to_string());
            rec.push(row.completion_ratio.to_string());
            rec.push(c.to_string());
            rec.push(row.energy.to_string());
            rec.push(row.perception_error.map_or(String::new(), |p| p.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write through a `.partial` file renamed on success, so an interrupted
/// write leaves an obviously incomplete artifact behind.
pub fn write_atomically(path: &Path, f: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let partial = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut file = fs::File::create(&partial)?;
    f(&mut file)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&partial, path)?;
    Ok(())
}

/// Sweep axis and values, e.g. `mus` over `[50, 100, 150, 200]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub config_hash: String,
    pub strategies: Vec<ConvergedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategyKind>,
    pub sweep: Option<SweepSpec>,
    pub outputs: Vec<PathBuf>,
    pub config: ScenarioConfig,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomically(path, |f| {
        serde_json::to_writer_pretty(&mut *f, value)?;
        f.write_all(b"\n")?;
        Ok(())
    })
}
