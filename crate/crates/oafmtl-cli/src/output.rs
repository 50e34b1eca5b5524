//! Output plumbing: CSV tables and the reproducibility manifest.
//!
//! All rows are written on one thread, in a deterministic order, after any
//! parallel computation has finished — outputs are byte-identical across
//! reruns regardless of worker-pool size.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Resolved, RunConfig};

/// Everything needed to reproduce a run: rerun the same command with the
/// embedded config and seeds to get byte-identical CSV files.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'static str,
    /// Code version baked in at compile time.
    pub version: &'static str,
    /// Hex SHA-256 of the resolved config's canonical JSON form.
    pub config_sha256: String,
    pub seeds: &'a [u64],
    pub config: &'a RunConfig,
}

/// Write `manifest.json` into the output directory (creating it).
pub fn write_manifest(resolved: &Resolved, command: &'static str) -> Result<()> {
    std::fs::create_dir_all(&resolved.out_dir)
        .with_context(|| format!("creating {}", resolved.out_dir.display()))?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: resolved.config.sha256()?,
        seeds: &resolved.seeds,
        config: &resolved.config,
    };
    let path = resolved.out_dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A CSV file under construction.
pub struct Table {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl Table {
    /// Create `dir/name` and write the header row.
    pub fn create(dir: &Path, name: &str, columns: &[&str]) -> Result<Table> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns)?;
        Ok(Table { writer, path })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer
            .flush()
            .with_context(|| format!("flushing {}", self.path.display()))?;
        Ok(self.path)
    }
}

/// Shortest round-trippable decimal form of a float.
pub fn f(v: f64) -> String {
    format!("{v}")
}

/// Optional float; empty cell when absent.
pub fn opt_f(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

pub fn u(v: usize) -> String {
    v.to_string()
}

pub fn b(v: bool) -> String {
    v.to_string()
}
