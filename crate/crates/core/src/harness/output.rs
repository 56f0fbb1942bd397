//! Staged output files and run manifests.
//!
//! Files are written as hidden temporaries and renamed into place only when the
//! whole run succeeds; the manifest goes last. Dropping an uncommitted
//! [`Outputs`] removes its temporaries.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub seed_generated: bool,
    pub started: String,
    pub finished: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputRecord>,
}

pub fn version_string() -> String {
    format!("wgloc-v{}", env!("CARGO_PKG_VERSION"))
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))?;
    f.sync_all().map_err(|e| io_err(path, e))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = temp_name(path);
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

fn temp_name(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.partial"))
}

pub struct Outputs {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf, OutputRecord)>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), staged: Vec::new(), committed: false })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: &str, contents: &[u8]) -> Result<(), HarnessError> {
        let target = self.dir.join(name);
        let tmp = temp_name(&target);
        write_synced(&tmp, contents)?;
        let record = OutputRecord { file: name.to_string(), sha256: hex::encode(Sha256::digest(contents)), bytes: contents.len() };
        self.staged.push((tmp, target, record));
        Ok(())
    }

    /// Moves every staged file into place and writes `<stem>.manifest.json`.
    pub fn commit(mut self, stem: &str, mut manifest: RunManifest) -> Result<PathBuf, HarnessError> {
        for (tmp, target, _) in &self.staged {
            fs::rename(tmp, target).map_err(|e| io_err(target, e))?;
        }
        manifest.outputs = self.staged.iter().map(|s| s.2.clone()).collect();
        manifest.finished = now();
        let path = self.dir.join(format!("{stem}.manifest.json"));
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, &json)?;
        self.committed = true;
        Ok(path)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Full round-trip precision for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut o = Outputs::new(dir.path()).unwrap();
            o.add("a.csv", b"x\n1\n").unwrap();
            assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_writes_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::new(dir.path()).unwrap();
        o.add("a.csv", b"abc").unwrap();
        let m = RunManifest {
            version: version_string(),
            command: vec![],
            seed: 1,
            seed_generated: false,
            started: now(),
            finished: String::new(),
            config: ExperimentConfig::default(),
            outputs: vec![],
        };
        let path = o.commit("t", m).unwrap();
        let back: RunManifest = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
        assert_eq!(back.outputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"abc");
    }
}
