//! On-disk formats. Line-delimited files start with a header line that
//! carries `schema_version`; binary files start with an 8-byte magic.

pub mod binary;
pub mod corpus;
pub mod pairs;
pub mod records;
pub mod run;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use binary::{read_checkpoint, read_index, write_checkpoint, write_index, Checkpoint};
pub use corpus::{load_corpus, write_corpus, CORPUS_SCHEMA};
pub use pairs::{read_pairs, write_pairs, PAIRS_SCHEMA};
pub use run::{read_run, write_run, RUN_SCHEMA};

/// Non-empty lines with 1-based line numbers.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub(crate) fn parse_line<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::malformed(path, line, e.to_string()))
}

/// Splits off and parses the header line, checking its schema version.
pub(crate) fn split_header<H: DeserializeOwned>(path: &Path, lines: &[(usize, String)], schema: &str) -> Result<H> {
    let (line, text) = lines
        .first()
        .ok_or_else(|| Error::malformed(path, 1, "missing header line"))?;
    let value: serde_json::Value = parse_line(path, *line, text)?;
    let found = value.get("schema_version").and_then(|v| v.as_str()).unwrap_or("");
    if found != schema {
        return Err(Error::SchemaVersion {
            path: path.to_path_buf(),
            found: found.to_string(),
            expected: schema.to_string(),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::malformed(path, *line, e.to_string()))
}

pub(crate) struct LineWriter {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl LineWriter {
    pub(crate) fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(LineWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub(crate) fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value).map_err(|e| Error::io(&self.path, e.into()))?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::malformed(path, e.line(), e.to_string()))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}
