//! Run manifest: what was requested, what each stage did, and a checksum for
//! every file the run wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    /// SHA-256 of the effective configuration's JSON text.
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
    pub status: Status,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(config_json: &str, seed: u64) -> Self {
        Manifest {
            tool: "fracheat".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: fracheat_core::VERSION.into(),
            config_hash: sha256_hex(config_json.as_bytes()),
            seed,
            stages: Vec::new(),
            outputs: Vec::new(),
            status: Status::Ok,
        }
    }

    pub fn record_output(&mut self, path: &str, bytes: &[u8]) {
        self.outputs.retain(|o| o.path != path);
        self.outputs.push(OutputRecord { path: path.into(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifests serialize");
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn rewriting_an_output_replaces_its_record() {
        let mut m = Manifest::new("{}", 0);
        m.record_output("a.csv", b"1");
        m.record_output("a.csv", b"22");
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].bytes, 2);
    }
}
