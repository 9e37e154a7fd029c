use std::fs::{self, File};
use std::io::{self, Read};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// What a stage read and wrote. Contains no timestamps, so identical runs
/// write identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn digest(path: &Path) -> io::Result<FileDigest> {
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_file(path)?,
    })
}

impl Manifest {
    pub fn build(stage: &str, config_hash: &str, inputs: &[&Path], outputs: &[&Path]) -> io::Result<Self> {
        Ok(Manifest {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            inputs: inputs.iter().map(|p| digest(p)).collect::<io::Result<_>>()?,
            outputs: outputs.iter().map(|p| digest(p)).collect::<io::Result<_>>()?,
        })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::from)?;
        text.push('\n');
        fs::write(path, text)
    }
}
