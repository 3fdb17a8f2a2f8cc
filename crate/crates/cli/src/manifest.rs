//! Run manifests: what was read, what was written, under which seed.
//!
//! Manifests carry no timestamps, host names or thread counts, so a re-run
//! with the same inputs and seed reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(command: &str, args: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            args,
            seed,
            versions: BTreeMap::from([(
                "lasiq".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            )]),
            status: RunStatus::Ok,
            error: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
        }
    }

    /// Rewrite every path relative to `dir` where it lies below it.
    pub fn relativize(&mut self, dir: &Path) {
        let fix = |list: &mut Vec<FileDigest>| {
            for d in list {
                d.path = relative_to(&d.path, dir);
            }
        };
        fix(&mut self.inputs);
        fix(&mut self.outputs);
        for s in &mut self.stages {
            fix(&mut s.inputs);
            fix(&mut s.outputs);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(self).expect("manifest serializes");
        b.push(b'\n');
        b
    }
}

pub fn relative_to(p: &Path, dir: &Path) -> PathBuf {
    match p.strip_prefix(dir) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel.to_path_buf(),
        _ => p.to_path_buf(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// `<out>.manifest.json` next to a single-command output.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_string() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn paths() {
        assert_eq!(
            manifest_path_for(Path::new("out/plan.csv")),
            PathBuf::from("out/plan.csv.manifest.json")
        );
        assert_eq!(
            relative_to(Path::new("w/a.csv"), Path::new("w")),
            PathBuf::from("a.csv")
        );
        assert_eq!(
            relative_to(Path::new("x/a.csv"), Path::new("w")),
            PathBuf::from("x/a.csv")
        );
    }
}
