//! Run manifests: enough provenance to reproduce any output bit for bit
//! (command line, config echo, root seed, tool version, content hashes of
//! every input file). The manifest lives next to the output as
//! `<out>.manifest.json`.

use crate::CliResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub root_seed: u64,
    pub tool_version: String,
    pub input_hashes: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub finished_unix_epoch: u64,
    pub failures: Vec<String>,
}

pub fn sha256_file(path: &str) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(config: serde_json::Value, root_seed: u64) -> RunManifest {
        RunManifest {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config,
            root_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes: BTreeMap::new(),
            wall_clock_seconds: 0.0,
            finished_unix_epoch: 0,
            failures: Vec::new(),
        }
    }

    pub fn hash_input(&mut self, path: &str) -> CliResult<()> {
        self.input_hashes.insert(path.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Stamp timing and write next to the output file.
    pub fn finish(mut self, out_path: &str, started: std::time::Instant) -> CliResult<()> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        self.finished_unix_epoch = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let path = format!("{out_path}.manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}
