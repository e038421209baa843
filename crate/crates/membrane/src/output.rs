//! Artifact output: plain CSV tables, JSON reports, and a run manifest
//! carrying the configuration hash so identical (config, seed) runs are
//! byte-identical and auditable.

use crate::config::RunConfig;
use crate::error::MembraneError;
use crate::pde::GridFunction;
use crate::stats::DensityTable;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Hex SHA-256 of the canonical TOML serialization: covers every field that
/// affects numerics (the whole config, including the seed).
pub fn config_hash(cfg: &RunConfig) -> Result<String, MembraneError> {
    let canonical = cfg.to_toml_string()?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Columns are written in a fixed order and floats with `{:.17e}` so equal
/// runs produce equal bytes.
fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), MembraneError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        let rec: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> MembraneError {
    MembraneError::Config(format!("csv: {e}"))
}

/// Histogram of a terminal ensemble law.
pub fn write_density_csv(path: &Path, table: &DensityTable) -> Result<(), MembraneError> {
    write_rows(
        path,
        &["bin_center", "density"],
        table
            .centers
            .iter()
            .zip(&table.density)
            .map(|(&c, &d)| vec![c, d]),
    )
}

/// Ensemble summary at checkpoints: one row per checkpoint with the mean and
/// standard error of a scalar functional.
pub fn write_checkpoint_csv(
    path: &Path,
    name: &str,
    checkpoints: &[f64],
    means: &[f64],
    ses: &[f64],
) -> Result<(), MembraneError> {
    write_rows(
        path,
        &["t", &format!("mean_{name}"), "se"],
        checkpoints
            .iter()
            .zip(means.iter().zip(ses))
            .map(|(&t, (&m, &s))| vec![t, m, s]),
    )
}

/// Final-time slice of a grid solve: `x, u`.
pub fn write_grid_csv(path: &Path, u: &GridFunction) -> Result<(), MembraneError> {
    let last = u.final_slice().to_vec();
    write_rows(
        path,
        &["x", "u"],
        u.xs.iter().zip(last).map(|(&x, v)| vec![x, v]),
    )
}

/// Kernel profile `y, value` (e.g. a transition-density section).
pub fn write_profile_csv(path: &Path, ys: &[f64], vals: &[f64]) -> Result<(), MembraneError> {
    write_rows(
        path,
        &["y", "value"],
        ys.iter().zip(vals).map(|(&y, &v)| vec![y, v]),
    )
}

/// One JSON verdict/report file, pretty-printed.
pub fn write_report_json<T: Serialize>(path: &Path, report: &T) -> Result<(), MembraneError> {
    let s = serde_json::to_string_pretty(report)
        .map_err(|e| MembraneError::Config(format!("json: {e}")))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub package_version: String,
    pub wall_time_secs: f64,
    pub artifacts: Vec<String>,
    pub pass: bool,
}

/// Collects artifacts written into an output directory and finishes with a
/// manifest naming them all.
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<String>,
    started: std::time::Instant,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, MembraneError> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            started: std::time::Instant::now(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    pub fn finish(mut self, cfg: &RunConfig, pass: bool) -> Result<Manifest, MembraneError> {
        let manifest = Manifest {
            config_hash: config_hash(cfg)?,
            seed: cfg.seed,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            artifacts: std::mem::take(&mut self.artifacts),
            pass,
        };
        write_report_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}
