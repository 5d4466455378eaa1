//! Sidecar files recording how an artifact was made.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::io;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileHash {
            path: path.display().to_string(),
            sha256: io::sha256_file(path)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// `<artifact>.prov.json` next to the artifact.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".prov.json");
    artifact.with_file_name(name)
}

/// One-line summary embedded into reports.
pub fn describe(config: &PipelineConfig, inputs: &[FileHash]) -> String {
    let mut s = format!("factmine {VERSION} config:{}", &config.sha256()[..12]);
    for f in inputs {
        s.push_str(&format!(" {}:{}", short_name(&f.path), &f.sha256[..12]));
    }
    s
}

fn short_name(path: &str) -> &str {
    Path::new(path).file_name().and_then(|n| n.to_str()).unwrap_or(path)
}

/// Hashes inputs and outputs and writes a sidecar for every output.
pub fn record(command: &str, config: &PipelineConfig, inputs: &[&Path], outputs: &[&Path]) -> Result<Provenance> {
    let prov = Provenance {
        tool: "factmine".to_string(),
        version: VERSION.to_string(),
        command: command.to_string(),
        config_sha256: config.sha256(),
        config: config.to_map(),
        inputs: inputs.iter().map(|p| FileHash::of(p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| FileHash::of(p)).collect::<Result<_>>()?,
    };
    for out in outputs {
        io::write_json(&sidecar_path(out), &prov)?;
    }
    Ok(prov)
}
