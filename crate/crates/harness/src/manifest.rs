//! Run manifests and output-directory ownership.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::io::KeyValues;

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const LOCK_NAME: &str = ".slitflow.lock";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exclusive use of an output directory for the life of the value.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(LOCK_NAME);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(HarnessError::Locked(dir.display().to_string()))
            }
            Err(e) => Err(HarnessError::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Stage timer; durations are only recorded when enabled so that default
/// output trees stay byte-identical between runs.
#[derive(Debug, Default)]
pub struct Timings {
    enabled: bool,
    stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, stages: Vec::new() }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        }
        out
    }
}

#[derive(Debug)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    /// Output directory relative to the run root (`.` for the root itself).
    pub output_dir: String,
    pub details: KeyValues,
    pub timings: Timings,
    /// Emitted files relative to the manifest's directory, `/`-separated.
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(experiment: &str, config_hash: &str, seed: u64, output_dir: &str, timings: Timings) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            output_dir: output_dir.to_string(),
            details: KeyValues::new(),
            timings,
            files: Vec::new(),
        }
    }

    pub fn add_file(&mut self, name: impl Into<String>) {
        self.files.push(name.into());
    }

    /// Hash every listed file and write `manifest.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut kv = KeyValues::new();
        kv.push("experiment", &self.experiment)
            .push("config_hash", &self.config_hash)
            .push("seed", self.seed)
            .push("output_dir", &self.output_dir)
            .push("tool_version", TOOL_VERSION);
        for (k, v) in self.details.entries() {
            kv.push(k.clone(), v);
        }
        for (stage, secs) in &self.timings.stages {
            kv.push(format!("timing.{stage}_s"), secs);
        }
        let mut files = self.files.clone();
        files.sort();
        files.dedup();
        kv.push("file_count", files.len());
        for name in &files {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(HarnessError::data(&path, "listed in the manifest but not written"));
            }
            kv.push(format!("file.{name}"), sha256_file(&path)?);
        }
        let path = dir.join(MANIFEST_NAME);
        kv.write(&path)?;
        Ok(path)
    }
}

/// Every regular file under `dir`, relative and `/`-separated, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))? {
            let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walked path lies under root");
                out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// Check that the manifest in `dir` lists exactly the files on disk (apart
/// from itself) with matching hashes.
pub fn verify(dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST_NAME);
    let kv = KeyValues::read(&path)?;
    let listed: Vec<(&str, &str)> =
        kv.entries().iter().filter_map(|(k, v)| k.strip_prefix("file.").map(|name| (name, v.as_str()))).collect();
    for (name, hash) in &listed {
        let file = dir.join(name);
        if !file.is_file() {
            return Err(HarnessError::data(&path, format!("listed file {name} is missing")));
        }
        if sha256_file(&file)? != *hash {
            return Err(HarnessError::data(&path, format!("hash of {name} does not match")));
        }
    }
    for name in list_files(dir)? {
        if name != MANIFEST_NAME && !listed.iter().any(|(n, _)| *n == name) {
            return Err(HarnessError::data(&path, format!("file {name} is not listed")));
        }
    }
    Ok(())
}
