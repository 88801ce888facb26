use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Record of one run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Subcommand-specific results (counts, metrics).
    pub summary: Value,
    pub wall_clock_s: f64,
}

pub struct ManifestBuilder {
    started: Instant,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(subcommand: &'static str, seed: Option<u64>, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            started: Instant::now(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                subcommand,
                seed,
                config: serde_json::to_value(config)?,
                inputs: Vec::new(),
                outputs: Vec::new(),
                summary: Value::Null,
                wall_clock_s: 0.0,
            },
        })
    }

    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.manifest.inputs.push(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.manifest.outputs.push(p.into());
    }

    pub fn summary(&mut self, v: impl Serialize) -> Result<()> {
        self.manifest.summary = serde_json::to_value(v)?;
        Ok(())
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}
