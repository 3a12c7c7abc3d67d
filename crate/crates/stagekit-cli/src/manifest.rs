//! Run manifests: one provenance record per command invocation, written
//! next to the artifacts it describes. Artifacts themselves stay free of
//! wall-clock data so replayed runs remain byte-identical; the manifest is
//! the one place timing lives.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Digest of the config file bytes driving the run.
    pub config_hash: String,
    /// Digest per input file, keyed by the path as configured.
    pub input_hashes: BTreeMap<String, String>,
    /// Single digest over all inputs, order-independent.
    pub corpus_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taxonomy_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier_config_hash: Option<String>,
    pub unix_epoch_seconds: u64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot hash {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, config_raw: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_raw.as_bytes()),
            input_hashes: BTreeMap::new(),
            corpus_hash: String::new(),
            taxonomy_version: None,
            classifier_config_hash: None,
            unix_epoch_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("clock after epoch")
                .as_secs(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        self.input_hashes
            .insert(label.to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<command>.manifest.toml` into the output directory, sealing
    /// the corpus hash over the recorded inputs first.
    pub fn write(mut self, output_dir: &Path) -> Result<(), CliError> {
        let mut combined = Sha256::new();
        for (label, digest) in &self.input_hashes {
            combined.update(label.as_bytes());
            combined.update(b"=");
            combined.update(digest.as_bytes());
            combined.update(b"\n");
        }
        self.corpus_hash = combined
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let path = output_dir.join(format!("{}.manifest.toml", self.command));
        let body = toml::to_string_pretty(&self)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, body)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
