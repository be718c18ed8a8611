//! Workspace directory and its `manifest.json`.
//!
//! Each stage run records the content hashes of the files it read, a
//! fingerprint of the settings it used and the hashes of the files it wrote.
//! A stage whose record still matches is skipped. `completed_at` is the only
//! time-dependent field and takes no part in any comparison.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub fingerprint: String,
    pub outputs: BTreeMap<String, String>,
    pub completed_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Workspace {
    root: PathBuf,
    manifest: Manifest,
}

fn key(rel: &Path) -> String {
    rel.to_string_lossy().replace('\\', "/")
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("creating workspace {}", root.display()))?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        } else {
            Manifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                stages: BTreeMap::new(),
            }
        };
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &Path) -> bool {
        self.path(rel).is_file()
    }

    /// Errors with [`CliError::MissingInput`] when the file is absent.
    pub fn read(&self, rel: &Path) -> Result<Vec<u8>> {
        let path = self.path(rel);
        if !path.is_file() {
            return Err(CliError::MissingInput(path));
        }
        Ok(std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?)
    }

    pub fn read_string(&self, rel: &Path) -> Result<String> {
        let bytes = self.read(rel)?;
        String::from_utf8(bytes)
            .map_err(|_| CliError::validation(format!("{} is not UTF-8", rel.display())))
    }

    pub fn require(&self, inputs: &[PathBuf]) -> Result<()> {
        match inputs.iter().find(|p| !self.exists(p)) {
            Some(p) => Err(CliError::MissingInput(self.path(p))),
            None => Ok(()),
        }
    }

    fn hash_inputs(&self, inputs: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        inputs
            .iter()
            .map(|p| Ok((key(p), sha256_hex(&self.read(p)?))))
            .collect()
    }

    /// True when the stage ran before with identical inputs and settings and
    /// its outputs are still untouched.
    pub fn up_to_date(&self, stage: &str, inputs: &[PathBuf], fingerprint: &str) -> Result<bool> {
        let Some(rec) = self.manifest.stages.get(stage) else {
            return Ok(false);
        };
        if rec.fingerprint != fingerprint || rec.inputs != self.hash_inputs(inputs)? {
            return Ok(false);
        }
        for (rel, hash) in &rec.outputs {
            match std::fs::read(self.root.join(rel)) {
                Ok(bytes) if sha256_hex(&bytes) == *hash => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }

    /// Writes via a temporary file in the target directory and a rename.
    pub fn write_atomic(&self, rel: &Path, bytes: &[u8]) -> Result<String> {
        let path = self.path(rel);
        let dir = path.parent().unwrap_or(&self.root);
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path)
            .map_err(|e| anyhow::anyhow!("replacing {}: {}", path.display(), e.error))?;
        Ok(sha256_hex(bytes))
    }

    pub fn record(
        &mut self,
        stage: &str,
        inputs: &[PathBuf],
        fingerprint: &str,
        outputs: BTreeMap<String, String>,
    ) -> Result<()> {
        let rec = StageRecord {
            inputs: self.hash_inputs(inputs)?,
            fingerprint: fingerprint.to_string(),
            outputs,
            completed_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        self.manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        self.manifest.stages.insert(stage.to_string(), rec);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        text.push('\n');
        self.write_atomic(Path::new(MANIFEST), text.as_bytes())?;
        Ok(())
    }
}

/// Collects a stage's outputs as they are written.
pub struct Outputs<'a> {
    ws: &'a Workspace,
    written: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    pub fn new(ws: &'a Workspace) -> Self {
        Self {
            ws,
            written: BTreeMap::new(),
        }
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
        let rel = rel.as_ref();
        let hash = self.ws.write_atomic(rel, contents.as_ref())?;
        self.written.insert(key(rel), hash);
        Ok(())
    }

    pub fn finish(self) -> BTreeMap<String, String> {
        self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_then_up_to_date() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        ws.write_atomic(Path::new("in.txt"), b"hello").unwrap();
        let inputs = vec![PathBuf::from("in.txt")];
        assert!(!ws.up_to_date("s", &inputs, "f").unwrap());

        let mut out = Outputs::new(&ws);
        out.write("out/a.txt", "A").unwrap();
        let written = out.finish();
        ws.record("s", &inputs, "f", written).unwrap();
        assert!(ws.up_to_date("s", &inputs, "f").unwrap());
        assert!(!ws.up_to_date("s", &inputs, "g").unwrap());

        // reopening reads the same manifest back
        let ws2 = Workspace::open(dir.path()).unwrap();
        assert!(ws2.up_to_date("s", &inputs, "f").unwrap());

        std::fs::write(dir.path().join("out/a.txt"), "tampered").unwrap();
        assert!(!ws2.up_to_date("s", &inputs, "f").unwrap());
    }

    #[test]
    fn missing_input_is_reported_with_its_path() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        match ws.require(&[PathBuf::from("clean/outages.csv")]) {
            Err(CliError::MissingInput(p)) => assert!(p.ends_with("clean/outages.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
