//! File access with input hashing, and the manifest written next to outputs.

use crate::error::CliError;
use camrobot::kinematics::{load_chain, KinematicChain};
use camrobot::CameraIntrinsics;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Tracks the inputs and outputs of one command invocation.
pub struct Run {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    started: f64,
}

impl Run {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Self {
        Run {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: now(),
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::parse(path, e))
    }

    pub fn read_chain(&mut self, path: &Path) -> Result<KinematicChain, CliError> {
        let bytes = self.read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| CliError::parse(path, e))?;
        load_chain(&text).map_err(|e| CliError::parse(path, e))
    }

    pub fn read_intrinsics(&mut self, path: &Path) -> Result<CameraIntrinsics, CliError> {
        self.read_json(path)
    }

    /// Reads a JSON document that is either a bare array or an object holding
    /// the array under `key`.
    pub fn read_list<T: DeserializeOwned>(&mut self, path: &Path, key: &str) -> Result<Vec<T>, CliError> {
        let value: serde_json::Value = self.read_json(path)?;
        let list = match value {
            serde_json::Value::Object(mut m) => m
                .remove(key)
                .ok_or_else(|| CliError::parse(path, format!("missing \"{key}\"")))?,
            v => v,
        };
        serde_json::from_value(list).map_err(|e| CliError::parse(path, e))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.outputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    pub fn finish(self, manifest_path: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_s: self.started,
            finished_unix_s: now(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io(manifest_path, e))?;
        std::fs::write(manifest_path, text + "\n").map_err(|e| CliError::io(manifest_path, e))
    }
}

/// `out.json` -> `out.json.manifest.json`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
