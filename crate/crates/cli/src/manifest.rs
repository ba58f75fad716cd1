//! Run manifests: every output file listed with a content hash, a
//! deterministic config hash and run id, stage timings, and leakage flags.
//! Re-running a manifest's config and seed reproduces the output hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(sha256_hex(&bytes))
}

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp-{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u128>,
    pub leakage_flags: Vec<String>,
    pub notes: Vec<String>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    out_dir: PathBuf,
    stage_start: Option<(String, Instant)>,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, config_bytes: &[u8], seed: u64, out_dir: &Path) -> Self {
        let config_hash = sha256_hex(config_bytes);
        let run_id = sha256_hex(format!("{subcommand}:{config_hash}:{seed}").as_bytes())[..16].to_string();
        Self {
            manifest: RunManifest {
                run_id,
                subcommand: subcommand.to_string(),
                config_hash,
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
                leakage_flags: Vec::new(),
                notes: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
            stage_start: None,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> CliResult<()> {
        let hash = hash_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn start_stage(&mut self, name: &str) {
        self.finish_stage();
        self.stage_start = Some((name.to_string(), Instant::now()));
    }

    pub fn finish_stage(&mut self) {
        if let Some((name, start)) = self.stage_start.take() {
            self.manifest.timings_ms.insert(name, start.elapsed().as_millis());
        }
    }

    pub fn flag_leakage(&mut self, flag: &str) {
        self.manifest.leakage_flags.push(flag.to_string());
    }

    pub fn note(&mut self, note: &str) {
        self.manifest.notes.push(note.to_string());
    }

    /// Write an output file inside the run directory and record its hash.
    pub fn write_output(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out_dir.join(rel);
        atomic_write(&path, bytes)?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Finalize the manifest into `run_manifest.json`.
    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.finish_stage();
        let json = serde_json::to_vec_pretty(&self.manifest)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        atomic_write(&self.out_dir.join("run_manifest.json"), &json)?;
        Ok(self.manifest)
    }
}
