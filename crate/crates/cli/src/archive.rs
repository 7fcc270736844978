//! Results persistence: tables, per-fit JSON lines and provenance metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::render::{render_table, to_csv, Format, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    /// SHA-256 of the canonical JSON form of `config`.
    pub config_hash: String,
    pub created_unix: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsArchive {
    pub metadata: Metadata,
    pub config: serde_json::Value,
    pub tables: Vec<Table>,
    pub records: Vec<serde_json::Value>,
}

/// Hex SHA-256 of the compact JSON encoding (object keys sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = serde_json::to_string(config).expect("JSON values always serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl ResultsArchive {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?;
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(ResultsArchive {
            metadata: Metadata {
                command: command.to_string(),
                config_hash: config_hash(&config),
                created_unix,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config,
            tables: Vec::new(),
            records: Vec::new(),
        })
    }

    /// Whether the stored hash still matches the stored configuration.
    pub fn verify(&self) -> bool {
        config_hash(&self.config) == self.metadata.config_hash
    }

    pub fn record(&mut self, value: &impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        self.records.push(v);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// All tables in `format`, headed by the command and config hash. No
    /// timestamp, so identical runs render identically.
    pub fn render(&self, format: Format) -> String {
        let mut out = match format {
            Format::Markdown => format!(
                "# tiltfit {}\n\nconfig sha256 `{}`, version {}\n\n",
                self.metadata.command, self.metadata.config_hash, self.metadata.version
            ),
            Format::Text => format!(
                "tiltfit {} (config sha256 {}, version {})\n\n",
                self.metadata.command, self.metadata.config_hash, self.metadata.version
            ),
            Format::Csv => String::new(),
        };
        for t in &self.tables {
            out += &render_table(t, format);
            out.push('\n');
        }
        out
    }

    /// Write `archive.json`, one CSV per table (the first also as
    /// `metrics.csv`), `fits.jsonl` and a report in `format`.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, contents: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| CliError::output(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("archive.json", serde_json::to_string_pretty(self).expect("archive serializes"))?;
        if let Some(first) = self.tables.first() {
            put("metrics.csv", to_csv(first))?;
        }
        for t in &self.tables {
            put(&format!("{}.csv", t.name), to_csv(t))?;
        }
        let lines: String = self.records.iter().map(|r| format!("{r}\n")).collect();
        put("fits.jsonl", lines)?;
        match format {
            Format::Text => put("report.txt", self.render(Format::Text))?,
            Format::Markdown | Format::Csv => put("report.md", self.render(Format::Markdown))?,
        }
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("archive.json");
        let text = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_detects_tampering() {
        let a: serde_json::Value = serde_json::from_str(r#"{"n": 50, "p": 7}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"p": 7, "n": 50}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        let mut arc = ResultsArchive::new("fit", &a).unwrap();
        assert!(arc.verify());
        arc.config["n"] = 51.into();
        assert!(!arc.verify());
    }
}
