//! CSV files stamped with the config hash and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::LabError;

/// Hex SHA-256 of the resolved config text.
pub fn config_hash(resolved: &str) -> String {
    Sha256::digest(resolved.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes artifacts into one directory; every file starts with the stamp line.
#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
    stamp: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn new(dir: &Path, hash: &str, seed: u64) -> Result<Self, LabError> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), stamp: format!("# config_sha256={hash} seed={seed}"), written: Vec::new() })
    }

    pub fn stamp(&self) -> &str {
        &self.stamp
    }

    /// Creates `name` holding the stamp, optional extra comment lines, the header,
    /// then whatever `body` writes.
    pub fn write(
        &mut self,
        name: &str,
        comments: &[String],
        header: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<PathBuf, LabError> {
        let path = self.dir.join(name);
        let io = |e| LabError::io(&path, e);
        let mut out = BufWriter::new(File::create(&path).map_err(io)?);
        writeln!(out, "{}", self.stamp).map_err(io)?;
        for c in comments {
            writeln!(out, "# {c}").map_err(io)?;
        }
        writeln!(out, "{header}").map_err(io)?;
        body(&mut out).map_err(io)?;
        out.flush().map_err(io)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, LabError> {
        let path = self.dir.join(name);
        std::fs::write(&path, format!("{}\n{text}", self.stamp)).map_err(|e| LabError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Formats an optional number, leaving the CSV cell empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
