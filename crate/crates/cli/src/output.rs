//! CSV artifacts with JSON sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

#[derive(Serialize)]
struct Sidecar<'a> {
    file: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    columns: &'a str,
    versions: Versions,
}

#[derive(Serialize)]
struct Versions {
    conehj: &'static str,
    #[serde(rename = "conehj-cli")]
    cli: &'static str,
}

/// Writes into one output directory and remembers what it wrote.
pub struct Artifacts {
    pub dir: PathBuf,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &'static str, config_hash: &str, seed: u64) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), command, config_hash: config_hash.into(), seed, files: Vec::new() })
    }

    /// `name.csv` plus `name.csv.json` holding the config hash and versions.
    pub fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        let file = format!("{name}.csv");
        let columns = std::str::from_utf8(&buf).ok().and_then(|s| s.lines().next()).unwrap_or("").to_string();
        let sidecar = Sidecar {
            file: &file,
            command: self.command,
            config_hash: &self.config_hash,
            seed: self.seed,
            columns: &columns,
            versions: Versions { conehj: conehj::VERSION, cli: env!("CARGO_PKG_VERSION") },
        };
        let path = self.dir.join(&file);
        fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        fs::write(self.dir.join(format!("{file}.json")), serde_json::to_vec_pretty(&sidecar)?)?;
        self.files.push(path);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let path = self.dir.join(format!("{name}.json"));
        fs::write(&path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }
}

/// `{:.16e}`: seventeen significant digits, round-trip exact.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}
