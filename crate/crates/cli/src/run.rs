//! Per-invocation bookkeeping: input digests, output files and the manifest
//! written next to them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!("sparse-concepts ", env!("CARGO_PKG_VERSION"));

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    pub parameters: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Run {
    args: Vec<String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(args: Vec<String>) -> Self {
        Self {
            args,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Records the digest of an input file and returns its path.
    pub fn input<'a>(&mut self, path: &'a Path) -> Result<&'a Path> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(path)
    }

    /// Registers a file about to be written so a failed run can remove it.
    pub fn output(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        if !self.outputs.contains(&path) {
            self.outputs.push(path.clone());
        }
        path
    }

    /// Deletes every registered output that exists.
    pub fn remove_outputs(&self) {
        for p in &self.outputs {
            if p.exists() {
                if let Err(e) = fs::remove_file(p) {
                    log::warn!("could not remove partial output {}: {e}", p.display());
                }
            }
        }
    }

    /// Writes the manifest for the outputs registered so far.
    pub fn finish(
        &mut self,
        manifest_path: impl Into<PathBuf>,
        command: &str,
        parameters: serde_json::Value,
        seed: Option<u64>,
        summary: serde_json::Value,
    ) -> Result<RunManifest> {
        let manifest_path = manifest_path.into();
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            if p != &manifest_path {
                outputs.insert(p.display().to_string(), sha256_file(p)?);
            }
        }
        let manifest = RunManifest {
            command: command.to_string(),
            args: self.args.clone(),
            parameters,
            inputs: self.inputs.clone(),
            outputs,
            tool_version: TOOL_VERSION.to_string(),
            seed,
            summary,
        };
        let path = self.output(manifest_path);
        write_json(&path, &serde_json::to_value(&manifest)?)?;
        Ok(manifest)
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// JSON to a file when given, otherwise to stdout.
pub fn emit_json(run: &mut Run, out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    match out {
        Some(p) => {
            let p = run.output(p);
            write_json(&p, value)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// `<path>.manifest.json`.
pub fn manifest_for(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `<prefix><suffix>`, e.g. `out/run` + `.dict.npy`.
pub fn with_prefix(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}
