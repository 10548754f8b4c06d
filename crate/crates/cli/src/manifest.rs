use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a run did, enough to repeat it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Simulate,
    Beamform { rf: PathBuf, method: String, tune: bool },
    Evaluate { maps: Vec<PathBuf>, truth: PathBuf },
    Bench { sizes: Vec<usize>, repetitions: usize, operators: Vec<String>, memory_budget_mb: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory for outputs, as given for inputs.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub scenario: u64,
    pub noise: u64,
    pub solver: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    /// Full configuration snapshot (TOML) after overrides.
    pub config: String,
    pub seeds: Seeds,
    pub threads: usize,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(invocation: Invocation, config: String, seeds: Seeds) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            config,
            seeds,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let (sha256, bytes) = checksum(path)?;
        self.inputs.push(FileRecord {
            path: path.to_path_buf(),
            sha256,
            bytes,
        });
        Ok(())
    }

    /// Records every file under `dir` except the manifest itself, sorted by path.
    pub fn record_outputs(&mut self, dir: &Path) -> CliResult<()> {
        let mut files = Vec::new();
        collect_files(dir, dir, &mut files)?;
        files.retain(|p| p != Path::new(MANIFEST_FILE));
        files.sort();
        self.outputs = files
            .into_iter()
            .map(|rel| {
                let (sha256, bytes) = checksum(&dir.join(&rel))?;
                Ok(FileRecord { path: rel, sha256, bytes })
            })
            .collect::<CliResult<_>>()?;
        Ok(())
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.timings.push((name.to_string(), seconds));
    }

    /// Writes `manifest.json` via a temporary file and rename.
    pub fn write_atomic(&self, dir: &Path) -> CliResult<PathBuf> {
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(format!("manifest: {e}")))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
        tmp.write_all(json.as_bytes()).map_err(|e| CliError::io(dir, e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(dir, e))?;
        let target = dir.join(MANIFEST_FILE);
        tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
        Ok(target)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Validation(format!("{}: not a run manifest: {e}", path.display())))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("walked from root").to_path_buf());
        }
    }
    Ok(())
}

pub fn checksum(path: &Path) -> CliResult<(String, u64)> {
    let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}
