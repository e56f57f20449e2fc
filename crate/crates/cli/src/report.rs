use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use toeplitz_wkb::experiments::ExperimentConfig;
use toeplitz_wkb::hamilton_jacobi::json_hash;

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub library: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    /// Reserved: every experiment is deterministic.
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: &'static str, cfg: &ExperimentConfig, seed: Option<u64>) -> Self {
        Provenance { library: "toeplitz-wkb", version: env!("CARGO_PKG_VERSION"), command, config_sha256: json_hash(cfg), seed }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    report: &'a T,
}

pub struct OutDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, cfg: &ExperimentConfig, report: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(&Envelope { provenance: prov, config: cfg, report })?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn mark(&mut self, path: PathBuf) {
        self.written.push(path);
    }
}
