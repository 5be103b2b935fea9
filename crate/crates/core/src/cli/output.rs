//! Buffered outputs: nothing touches the output directory until every
//! payload of a command has been produced.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Checkpoint, Model};

pub struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        if dir.exists() && !dir.is_dir() {
            return Err(Error::Config(format!("output path {} is not a directory", dir.display())));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, name: impl Into<PathBuf>, content: String) {
        self.files.push((name.into(), content));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<PathBuf>, value: &T) {
        self.add(name, to_json(value));
    }

    /// CSV with a leading `# config_digest=` comment line.
    pub fn add_csv(&mut self, name: impl Into<PathBuf>, digest: &str, body: &str) {
        self.add(name, format!("# config_digest={digest}\n{body}"));
    }

    /// Writes every file via a temporary name and rename. Returns the paths.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (name, content) in self.files {
            let path = self.dir.join(&name);
            let parent = path.parent().unwrap_or(&self.dir).to_path_buf();
            fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
            let file_name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            let tmp = parent.join(format!(".{file_name}.tmp"));
            fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization is infallible");
    s.push('\n');
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the spec and parameters alone.
pub fn model_digest(model: &Model) -> Result<String> {
    let ck = Checkpoint::new(model.spec.clone(), model.params.clone())?;
    Ok(sha256_hex(ck.to_json().as_bytes()))
}

pub fn ensemble_digest(models: &[Model]) -> Result<String> {
    let parts = models.iter().map(model_digest).collect::<Result<Vec<_>>>()?;
    Ok(sha256_hex(parts.join("\n").as_bytes()))
}
