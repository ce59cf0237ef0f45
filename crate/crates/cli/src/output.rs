//! Artifact directory and the manifest that lists every file with its hash.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use harmonium_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: String,
    pub config_sha256: String,
    pub stride: usize,
    pub jobs: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<CheckRecord>,
    pub values: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub files: Vec<FileEntry>,
    pub pass: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs under one directory; nothing touches the disk before the first write.
pub struct Sink {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Sink {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    /// Path for a file stem inside the output directory, creating the directory.
    pub fn stem(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        Ok(self.dir.join(name))
    }

    /// Write a file from a closure that renders into memory.
    pub fn write(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        let path = self.stem(name)?;
        fs::File::create(&path)?.write_all(&buf)?;
        self.push(name, &buf);
        Ok(())
    }

    /// Register files some other writer already produced.
    pub fn record(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            let bytes = fs::read(p)?;
            let name = p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().into_owned();
            self.push(&name, &bytes);
        }
        Ok(())
    }

    fn push(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = self.files;
        fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(manifest)
    }
}
