use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hotsearch_core::evalbridge::digest_json;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
}

impl Header {
    /// `inputs` is everything that determines the command's output.
    pub fn new(command: &str, inputs: &Value, seed: Option<u64>) -> Self {
        Self {
            tool: "hotsearch",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_digest: digest_json(inputs),
            seed,
        }
    }

    fn comment(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# {} {} command={} config={} seed={}\n",
            self.tool, self.version, self.command, self.config_digest, seed
        )
    }
}

pub fn output_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// Writes `{"header": ..., <body fields>}`.
pub fn write_json(path: &Path, header: &Header, body: impl Serialize) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    let obj = value.as_object_mut().context("report bodies are JSON objects")?;
    obj.insert("header".into(), serde_json::to_value(header)?);
    let text = serde_json::to_string_pretty(&value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// CSV preceded by one `#` header line.
pub fn write_csv<R: Serialize>(path: &Path, header: &Header, rows: &[R], columns: &[&str]) -> Result<()> {
    let mut file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    file.write_all(header.comment().as_bytes())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
