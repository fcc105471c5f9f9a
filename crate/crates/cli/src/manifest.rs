//! Run manifests: the command, every resolved parameter, input digests,
//! tool version, and wall-clock duration, written as `manifest.json` next
//! to the outputs. Identical parameters and inputs reproduce identical
//! tabular outputs; the duration field only documents the run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    parameters: BTreeMap<String, serde_json::Value>,
    inputs: BTreeMap<String, String>,
    duration_seconds: f64,
}

pub struct ManifestBuilder {
    command: String,
    parameters: BTreeMap<String, serde_json::Value>,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> ManifestBuilder {
        ManifestBuilder {
            command: command.to_string(),
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable parameter"),
        );
        self
    }

    /// Record an input file with its SHA-256 digest.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let bytes = fs::read(path)
            .with_context(|| format!("cannot read input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        self.inputs.insert(path.display().to_string(), hex);
        Ok(self)
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let manifest = Manifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: self.parameters.clone(),
            inputs: self.inputs.clone(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
