use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub command: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one output directory: the tool, the settings, a digest of every
/// input and of every artifact. Contains no timestamps, so identical runs
/// produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, OutputEntry>,
}

pub fn digest_bytes(bytes: &[u8]) -> FileDigest {
    FileDigest {
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
    }
}

pub fn digest_file(path: &Path) -> Result<FileDigest, PipelineError> {
    let mut file = fs::File::open(path).map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Option<Manifest> {
        let text = fs::read_to_string(out_dir.join(MANIFEST_NAME)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Keep outputs of an earlier manifest produced from the same settings
    /// and inputs; anything else is stale and dropped.
    pub fn absorb(&mut self, previous: Option<Manifest>) {
        if let Some(prev) = previous {
            if prev.config_sha256 == self.config_sha256 && prev.inputs == self.inputs {
                for (path, entry) in prev.outputs {
                    self.outputs.entry(path).or_insert(entry);
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Artifacts are written into a staging directory and renamed into the
/// output directory only once the whole command has succeeded.
pub struct Staging {
    dir: PathBuf,
    out_dir: PathBuf,
    files: Vec<(String, FileDigest)>,
}

impl Staging {
    pub fn new(out_dir: &Path, command: &str) -> Result<Self, PipelineError> {
        let dir = out_dir.join(format!(".staging-{command}"));
        let io = |e: std::io::Error| PipelineError::data(format!("{}: {e}", dir.display()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io)?;
        }
        fs::create_dir_all(&dir).map_err(io)?;
        Ok(Self {
            dir,
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?;
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), digest_bytes(bytes)));
        Ok(())
    }

    pub fn files(&self) -> &[(String, FileDigest)] {
        &self.files
    }

    pub fn commit(mut self) -> Result<Vec<(String, FileDigest)>, PipelineError> {
        for (name, _) in &self.files {
            let to = self.out_dir.join(name);
            fs::rename(self.dir.join(name), &to).map_err(|e| PipelineError::data(format!("{}: {e}", to.display())))?;
        }
        let _ = fs::remove_dir_all(&self.dir);
        Ok(std::mem::take(&mut self.files))
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_files_appear_only_on_commit() {
        let tmp = tempfile::tempdir().unwrap();
        let mut s = Staging::new(tmp.path(), "x").unwrap();
        s.write("a.csv", b"hello").unwrap();
        assert!(!tmp.path().join("a.csv").exists());
        let files = s.commit().unwrap();
        assert_eq!(fs::read(tmp.path().join("a.csv")).unwrap(), b"hello");
        assert_eq!(files[0].1, digest_bytes(b"hello"));
        assert!(!tmp.path().join(".staging-x").exists());
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        {
            let mut s = Staging::new(tmp.path(), "y").unwrap();
            s.write("b.csv", b"partial").unwrap();
        }
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn digest_known_value() {
        assert_eq!(
            digest_bytes(b"abc").sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn absorb_keeps_matching_outputs_only() {
        let base = Manifest {
            tool: "t".into(),
            version: "1".into(),
            config_sha256: "c".into(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        let mut prev = base.clone();
        prev.outputs.insert(
            "old.csv".into(),
            OutputEntry {
                command: "stats".into(),
                sha256: "x".into(),
                bytes: 1,
            },
        );
        let mut m = base.clone();
        m.absorb(Some(prev.clone()));
        assert!(m.outputs.contains_key("old.csv"));
        let mut other = Manifest {
            config_sha256: "d".into(),
            ..base
        };
        other.absorb(Some(prev));
        assert!(other.outputs.is_empty());
    }
}
