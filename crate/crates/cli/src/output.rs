//! Output files. Every file carries the tool version and the SHA-256 of the effective config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "yamabe";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamp shared by all files of one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
}

impl Meta {
    /// Hashes the config text together with command-line overrides.
    pub fn new(command: &str, config_text: &str, overrides: &[(&str, String)]) -> Self {
        let mut h = Sha256::new();
        h.update(config_text.as_bytes());
        for (k, v) in overrides {
            h.update(format!("\n--{k}={v}").as_bytes());
        }
        Self { tool: TOOL, version: VERSION, command: command.to_string(), config_sha256: hex::encode(h.finalize()) }
    }

    fn comment(&self) -> String {
        format!("# {} {} {} config_sha256={}\n", self.tool, self.version, self.command, self.config_sha256)
    }
}

pub struct OutDir {
    pub dir: PathBuf,
    pub meta: Meta,
}

impl OutDir {
    pub fn create(dir: &Path, meta: Meta) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), meta })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `{"meta": ..., "result": ...}`.
    pub fn json<T: Serialize>(&self, name: &str, result: &T) -> std::io::Result<()> {
        let v = json!({ "meta": self.meta, "result": result });
        let mut text = serde_json::to_string_pretty(&v).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(self.path(name), text)
    }

    /// Writes a CSV whose first line is a `#` comment with the stamp; `body` writes header and rows.
    pub fn csv<F>(&self, name: &str, body: F) -> std::io::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
    {
        let mut buf = self.meta.comment().into_bytes();
        body(&mut buf).map_err(std::io::Error::other)?;
        fs::File::create(self.path(name))?.write_all(&buf)
    }

    pub fn text(&self, name: &str, body: &str) -> std::io::Result<()> {
        fs::write(self.path(name), format!("{}{body}", self.meta.comment()))
    }
}

/// Drops leading `#` lines, so stamped CSVs can be read back.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}
