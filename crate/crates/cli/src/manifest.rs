use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use geotv::formats::FORMAT_VERSION;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Deliberately free of timestamps and
/// host details so identical runs write identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: &'static str,
    pub command: &'static str,
    pub config: BTreeMap<String, Value>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    pub counts: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        RunManifest {
            tool: "geotv",
            version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            command,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn count(&mut self, key: &str, value: impl TryInto<u64>) -> &mut Self {
        self.counts.insert(key.to_string(), value.try_into().unwrap_or(u64::MAX));
        self
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(role.to_string(), digest(path)?);
        Ok(self)
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<&mut Self> {
        self.outputs.insert(role.to_string(), digest(path)?);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// `<path>.manifest.json` next to a single-file output.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Gamma as written in manifests: a number, or the string "inf".
pub fn km_value(km: f64) -> Value {
    if km.is_finite() {
        Value::from(km)
    } else {
        Value::from(km.to_string())
    }
}

/// Writes through a buffered file and flushes, with the path in any error.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}
