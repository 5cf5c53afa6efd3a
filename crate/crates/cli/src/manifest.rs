//! Run manifests: what ran, with which settings, reading and writing what.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hsk_core::datacube::io::raster_paths;
use hsk_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration; feed it back with `--config`.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub tool_version: String,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// The manifest with wall time zeroed, for comparing reruns.
    pub fn without_wall_time(&self) -> Self {
        Self {
            wall_seconds: 0.0,
            ..self.clone()
        }
    }
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Collects outputs and writes `run.json` into `out_dir`.
pub(crate) struct Recorder {
    command: &'static str,
    out_dir: PathBuf,
    started: Instant,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Recorder {
    pub fn new(command: &'static str, out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
        Ok(Self {
            command,
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.out_dir
    }

    /// Absolute-or-relative path of an output named `name`, recorded.
    pub fn output(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let path = self.out_dir.join(&name);
        self.outputs.push(name);
        path
    }

    /// Records a raster by its header name together with its payload.
    pub fn raster(&mut self, header: impl Into<String>) -> PathBuf {
        let header = header.into();
        let (h, d) = raster_paths(Path::new(&header));
        self.outputs.push(d.display().to_string());
        self.output(h.display().to_string())
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn finish(mut self, config: &impl Serialize, seed: Option<u64>) -> Result<RunManifest> {
        self.outputs.sort();
        self.outputs.dedup();
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(OutputFile {
                    path: p.clone(),
                    sha256: sha256_file(&self.out_dir.join(p))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| Error::Format(format!("config snapshot: {e}")))?,
            seed,
            inputs: self.inputs,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
        Ok(manifest)
    }
}
