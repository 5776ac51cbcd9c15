//! Per-workdir record of what each stage consumed and produced, used to skip
//! stages whose inputs have not changed.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".ggcnn.lock";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(CliError::io(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf).map_err(CliError::io(path))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config: Value,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the workdir) → sha256.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), stages: BTreeMap::new() }
    }
}

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input { path, message: format!("corrupt manifest: {e}") })
    }

    pub fn save(&self, workdir: &Path) -> Result<()> {
        let path = workdir.join(MANIFEST_FILE);
        let tmp = workdir.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).expect("manifest is serializable");
        fs::write(&tmp, text + "\n").map_err(CliError::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(CliError::io(&path))
    }
}

/// A stage about to run: its config slice, the files it reads and the files
/// it will write into the workdir.
pub struct StagePlan {
    pub name: &'static str,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<&'static str>,
}

impl StagePlan {
    fn hash_inputs(&self) -> Result<BTreeMap<String, String>> {
        self.inputs.iter().map(|p| Ok((p.display().to_string(), sha256_file(p)?))).collect()
    }

    fn current(&self, workdir: &Path, record: &StageRecord, inputs: &BTreeMap<String, String>) -> Result<bool> {
        if record.config != self.config || &record.inputs != inputs {
            return Ok(false);
        }
        if record.outputs.len() != self.outputs.len() {
            return Ok(false);
        }
        for name in &self.outputs {
            let path = workdir.join(name);
            match record.outputs.get(*name) {
                Some(h) if path.exists() && &sha256_file(&path)? == h => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }
}

/// Runs `body` unless the manifest shows identical inputs, config and intact
/// outputs. Returns whether the stage ran.
pub fn run_stage(workdir: &Path, force: bool, plan: StagePlan, body: impl FnOnce() -> Result<()>) -> Result<bool> {
    let mut manifest = Manifest::load(workdir)?;
    let inputs = plan.hash_inputs()?;
    if !force {
        if let Some(rec) = manifest.stages.get(plan.name) {
            if plan.current(workdir, rec, &inputs)? {
                println!("{}: up-to-date", plan.name);
                return Ok(false);
            }
        }
    }
    let started_unix = unix_now();
    body()?;
    let mut outputs = BTreeMap::new();
    for name in &plan.outputs {
        let path = workdir.join(name);
        if !path.exists() {
            return Err(CliError::Runtime(format!("stage {} did not produce {}", plan.name, path.display())));
        }
        outputs.insert(name.to_string(), sha256_file(&path)?);
    }
    manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
    manifest.stages.insert(
        plan.name.to_string(),
        StageRecord { config: plan.config, inputs, outputs, started_unix, finished_unix: unix_now() },
    );
    manifest.save(workdir)?;
    Ok(true)
}

/// Exclusive hold on a workdir for the lifetime of the value.
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self> {
        fs::create_dir_all(workdir).map_err(CliError::io(workdir))?;
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "pid {}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default().trim().to_string();
                Err(CliError::Locked { path: workdir.to_path_buf(), holder })
            }
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
