//! CSV and JSON report writers. Every CSV carries a header row and a footer
//! comment with the config hash, so identical config + seed reproduce
//! byte-identical files.

use nmot_core::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct Report {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Report {
    pub fn new(dir: &Path, hash: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::domain(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Report {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            seed,
        })
    }

    pub fn footer(&self) -> String {
        format!(
            "# config_hash={} seed={} version={}\n",
            self.hash,
            self.seed,
            env!("CARGO_PKG_VERSION")
        )
    }

    /// Write a CSV with header, rows, and the footer comment.
    pub fn csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut text = String::new();
        text.push_str(header);
        text.push('\n');
        for row in rows {
            let _ = writeln!(text, "{}", row.join(","));
        }
        text.push_str(&self.footer());
        let path = self.dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| Error::domain(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Write a JSON summary augmented with the environment stamp.
    pub fn json(&self, name: &str, mut value: serde_json::Value) -> Result<PathBuf> {
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("config_hash".into(), self.hash.clone().into());
            map.insert("seed".into(), self.seed.into());
            map.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        }
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(&value).expect("serializable");
        std::fs::write(&path, text + "\n")
            .map_err(|e| Error::domain(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Uniform float formatting for CSV cells (shortest round-trip form).
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
