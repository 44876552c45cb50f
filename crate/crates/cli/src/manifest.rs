//! Run manifests: every directory-producing command records what went in,
//! what came out, and the digests to prove it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use mmts_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record for one command invocation. Input paths are recorded
/// as given on the command line; output paths are relative to the run
/// directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Seed the command consumed, if it draws randomness.
    pub seed: Option<u64>,
    /// Wall-clock creation time; the only field allowed to differ between
    /// identically seeded reruns.
    pub created_unix: u64,
    /// Resolved configuration echo, after flag overrides.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// SHA-256 of a file's bytes as lowercase hex.
pub fn digest_file<P: AsRef<Path>>(path: P) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .as_secs(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records an input file under the path it was named by.
    pub fn record_input<P: AsRef<Path>>(&mut self, path: P) -> Result<()> {
        let key = path.as_ref().to_string_lossy().into_owned();
        let digest = digest_file(&path)?;
        self.inputs.insert(key, digest);
        Ok(())
    }

    /// Records an output file living at `dir/name`.
    pub fn record_output<P: AsRef<Path>>(&mut self, dir: P, name: &str) -> Result<()> {
        let digest = digest_file(dir.as_ref().join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    /// Writes `manifest.json` into the run directory.
    pub fn save<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        let text = format!("{}\n", serde_json::to_string_pretty(self)?);
        fs::write(dir.as_ref().join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(dir: P) -> Result<Self> {
        let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-hashes every recorded input and output and compares against the
    /// stored digests.
    pub fn verify<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        for (path, expected) in &self.inputs {
            let actual = digest_file(path)?;
            if actual != *expected {
                return Err(Error::Validation(format!(
                    "input {path} digest mismatch: recorded {expected}, found {actual}"
                )));
            }
        }
        for (name, expected) in &self.outputs {
            let actual = digest_file(dir.as_ref().join(name))?;
            if actual != *expected {
                return Err(Error::Validation(format!(
                    "output {name} digest mismatch: recorded {expected}, found {actual}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        fs::write(&path, b"abc").unwrap();
        assert_eq!(
            digest_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn verify_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("input.bin");
        fs::write(&input, b"payload").unwrap();
        let out_dir = dir.path().join("run");
        fs::create_dir(&out_dir).unwrap();
        fs::write(out_dir.join("result.tsv"), b"a\t1\n").unwrap();

        let mut manifest = RunManifest::new("test", Some(7), serde_json::json!({"k": 2}));
        manifest.record_input(&input).unwrap();
        manifest.record_output(&out_dir, "result.tsv").unwrap();
        manifest.save(&out_dir).unwrap();

        let loaded = RunManifest::load(&out_dir).unwrap();
        assert_eq!(loaded, manifest);
        loaded.verify(&out_dir).unwrap();

        fs::write(out_dir.join("result.tsv"), b"tampered").unwrap();
        assert!(loaded.verify(&out_dir).is_err());
    }

    #[test]
    fn missing_input_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new("test", None, serde_json::Value::Null);
        let err = manifest
            .record_input(dir.path().join("absent"))
            .unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
