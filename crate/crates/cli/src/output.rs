//! Output headers and all-or-nothing file writing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "rmpnav";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

/// Identifies the tool build and the exact configuration behind an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema: u32,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    /// Hashes the canonical JSON encoding of `config`.
    pub fn new(config: &serde_json::Value, seed: u64) -> Self {
        let digest = Sha256::digest(config.to_string().as_bytes());
        Self {
            tool: TOOL,
            version: VERSION,
            schema: SCHEMA_VERSION,
            config_sha256: hex::encode(digest),
            seed,
        }
    }

    /// Comment line opening every CSV file.
    pub fn csv_line(&self) -> String {
        format!(
            "# {} {} schema={} config_sha256={} seed={}\n",
            self.tool, self.version, self.schema, self.config_sha256, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// CSV text with the header comment, a column row and one row per record.
pub fn csv(header: &Header, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.csv_line();
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Pretty JSON `{"header": ..., <body fields>}` with a trailing newline.
pub fn json<B: Serialize>(header: &Header, body: &B) -> serde_json::Result<String> {
    let mut value = serde_json::to_value(body)?;
    let map = match value {
        serde_json::Value::Object(ref mut m) => m,
        _ => unreachable!("bodies are structs"),
    };
    let mut out = serde_json::Map::new();
    out.insert("header".into(), serde_json::to_value(header)?);
    out.append(map);
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(out))?;
    text.push('\n');
    Ok(text)
}

/// Files collected in memory and written together.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, String)>,
}

impl OutputSet {
    pub fn add(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.files.push((path.into(), contents));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file to a temporary sibling first and renames them into
    /// place only after all writes succeeded.
    pub fn commit(self) -> io::Result<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        let result = (|| {
            for (path, contents) in &self.files {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                let mut tmp = path.clone().into_os_string();
                tmp.push(".partial");
                let tmp = PathBuf::from(tmp);
                fs::write(&tmp, contents)?;
                staged.push((tmp, path.clone()));
            }
            for (tmp, path) in &staged {
                fs::rename(tmp, path)?;
            }
            Ok(())
        })();
        if result.is_err() {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_hash_depends_on_config() {
        let a = Header::new(&serde_json::json!({"x": 1}), 3);
        let b = Header::new(&serde_json::json!({"x": 2}), 3);
        assert_ne!(a.config_sha256, b.config_sha256);
        assert_eq!(a.config_sha256.len(), 64);
        assert!(a.csv_line().starts_with("# rmpnav "));
    }

    #[test]
    fn json_puts_header_first() {
        #[derive(Serialize)]
        struct Body {
            value: u32,
        }
        let h = Header::new(&serde_json::json!({}), 0);
        let text = json(&h, &Body { value: 4 }).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["value"], 4);
        assert!(text.find("header").unwrap() < text.find("value").unwrap());
    }
}
