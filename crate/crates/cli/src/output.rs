//! Run manifests and artifact emission.
//!
//! Every artifact cites the SHA-256 of its manifest. The hash covers the command, the effective
//! configuration, the master seed, the tool version and the artifact names; timestamps and
//! worker counts are recorded but excluded.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
struct HashedManifest<'a> {
    command: &'a str,
    config: &'a Value,
    master_seed: Option<u64>,
    tool_version: &'a str,
    outputs: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub manifest_sha256: String,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn manifest_hash(
    command: &str,
    config: &Value,
    master_seed: Option<u64>,
    outputs: &[String],
) -> String {
    let hashed = HashedManifest {
        command,
        config,
        master_seed,
        tool_version: fpp_core::TOOL_VERSION,
        outputs,
    };
    let bytes = serde_json::to_vec(&hashed).expect("manifest serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub enum Payload {
    Csv(String),
    Json(Value),
}

pub struct Artifact {
    pub name: String,
    pub payload: Payload,
}

/// Header and serialized rows; the manifest line is prepended when the artifact is emitted.
pub fn csv_body<R: Serialize>(rows: &[R]) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

pub fn json_text(hash: &str, value: &Value) -> String {
    let wrapped = serde_json::json!({ "manifest_sha256": hash, "result": value });
    serde_json::to_string_pretty(&wrapped).expect("json value serializes") + "\n"
}

fn payload_text(hash: &str, p: &Payload) -> String {
    match p {
        Payload::Csv(body) => format!("# manifest_sha256={hash}\n{body}"),
        Payload::Json(v) => json_text(hash, v),
    }
}

/// Writes artifacts and `manifest.json` into `dir`; returns the manifest.
pub fn write_run(
    dir: &Path,
    command: &str,
    config: Value,
    master_seed: Option<u64>,
    workers: usize,
    started_unix: u64,
    artifacts: &[Artifact],
) -> Result<RunManifest, String> {
    let outputs: Vec<String> = artifacts.iter().map(|a| a.name.clone()).collect();
    let hash = manifest_hash(command, &config, master_seed, &outputs);
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for a in artifacts {
        let path: PathBuf = dir.join(&a.name);
        std::fs::write(&path, payload_text(&hash, &a.payload))
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        master_seed,
        tool_version: fpp_core::TOOL_VERSION.to_string(),
        outputs,
        manifest_sha256: hash,
        workers,
        started_unix,
        finished_unix: unix_now(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(dir.join("manifest.json"), text)
        .map_err(|e| format!("cannot write manifest: {e}"))?;
    Ok(manifest)
}

/// Text printed to standard output for an artifact.
pub fn stdout_text(hash: &str, a: &Artifact) -> String {
    match &a.payload {
        Payload::Csv(_) => payload_text(hash, &a.payload),
        Payload::Json(v) => serde_json::to_string_pretty(v).expect("json value serializes") + "\n",
    }
}
