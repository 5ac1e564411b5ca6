use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use tactile_gesture::model_file::sha256_hex;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Run record written next to a command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started_unix_ms: u128,
    pub wall_clock_s: f64,
    #[serde(skip)]
    t0: Option<Instant>,
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            argv: std::env::args().collect(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            wall_clock_s: 0.0,
            t0: Some(Instant::now()),
        }
    }

    pub fn seed(&mut self, name: &str, v: u64) {
        self.seeds.insert(name.into(), v);
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(artifact(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(artifact(path)?);
        Ok(())
    }

    pub fn write(&mut self, path: &Path) -> std::io::Result<()> {
        if let Some(t0) = self.t0 {
            self.wall_clock_s = t0.elapsed().as_secs_f64();
        }
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(path, text + "\n")
    }
}

fn artifact(path: &Path) -> std::io::Result<Artifact> {
    Ok(Artifact {
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

/// `model.json` -> `model.json.manifest.json`
pub fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
