use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// One per command invocation, written as `manifest.json` in the output directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the settings, excluding the output directory.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub versions: BTreeMap<String, String>,
    /// Resolved settings; pass this file back with `--config` to replay.
    pub settings: Value,
}

pub fn config_hash(settings: &Value) -> String {
    let mut v = settings.clone();
    if let Value::Object(m) = &mut v {
        m.remove("out");
    }
    // serde_json maps are ordered by key, so this text is canonical.
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Run {
    command: &'static str,
    out: PathBuf,
    settings: Value,
    seed: Option<u64>,
    start: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, out: PathBuf, settings: &impl Serialize, seed: Option<u64>) -> Result<Run> {
        std::fs::create_dir_all(&out)?;
        Ok(Run {
            command,
            out,
            settings: serde_json::to_value(settings)?,
            seed,
            start: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    /// Path of an output file, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn finish(mut self) -> Result<()> {
        let mut versions = BTreeMap::new();
        versions.insert("serra".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("checkpoint_format".into(), serra_core::tft::CHECKPOINT_FORMAT_VERSION.to_string());
        let path = self.out.join("manifest.json");
        self.outputs.push(path.clone());
        let m = RunManifest {
            command: self.command.into(),
            config_hash: config_hash(&self.settings),
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            versions,
            settings: self.settings,
        };
        std::fs::write(path, serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}
