//! Output files. JSON files carry a `meta` object; CSV files open with one
//! `#` comment line holding the same fields, then the header row.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(command: &'static str, config_hash: String, seed: u64) -> Self {
        Self { tool: "torusflux", version: env!("CARGO_PKG_VERSION"), command, config_hash, seed }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# tool={} version={} command={} config_hash={} seed={}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed
        )
    }
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    meta: &'a Meta,
    data: &'a T,
}

pub struct Writer {
    pub dir: PathBuf,
    pub meta: Meta,
}

impl Writer {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), meta })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(&Wrapped { meta: &self.meta, data })
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        bytes.push(b'\n');
        self.put(name, &bytes)
    }

    /// `body` must start with its header row.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let text = self.meta.csv_comment() + body;
        self.put(name, text.as_bytes())
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        self.put(name, bytes)
    }
}

/// Format a float for CSV: shortest round-trip form, `.` decimal.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
