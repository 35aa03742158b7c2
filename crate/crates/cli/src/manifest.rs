use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

/// Inputs, outputs and resolved configuration of one command run. Contains
/// no timestamps, so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    version: &'static str,
    config_file: &'static str,
    inputs: BTreeMap<String, FileRecord>,
    outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_file: CONFIG_FILE,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let record = FileRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        };
        self.inputs.insert(role.to_string(), record);
        Ok(())
    }

    /// Writes `config` as TOML, hashes every regular file already in `dir`
    /// and writes the manifest beside them.
    pub fn finish(mut self, dir: &Path, config: &impl Serialize) -> Result<PathBuf> {
        let toml = toml::to_string(config).context("serialising the resolved config")?;
        write(&dir.join(CONFIG_FILE), toml.as_bytes())?;
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if path.is_file() && name != MANIFEST_FILE {
                self.outputs.insert(name.to_string(), sha256_file(&path)?);
            }
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self)?;
        write(&path, format!("{json}\n").as_bytes())?;
        Ok(path)
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
