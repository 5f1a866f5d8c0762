use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

/// Record of one invocation, written beside its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub version: String,
    pub wall_clock_s: f64,
}

pub struct Recorder {
    command: &'static str,
    seed: u64,
    threads: Option<usize>,
    start: Instant,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &'static str, seed: u64, threads: Option<usize>) -> Self {
        Recorder {
            command,
            seed,
            threads,
            start: Instant::now(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes the manifest to `path`.
    pub fn finish(self, path: &Path) -> Result<()> {
        let m = RunManifest {
            command: self.command.into(),
            argv: std::env::args().collect(),
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            threads: self.threads,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_s: self.start.elapsed().as_secs_f64(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

/// `dir/manifest.json` for directory outputs, `file.manifest.json` for files.
pub fn beside(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_outputs() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(beside(dir.path()), dir.path().join("manifest.json"));
        let file = dir.path().join("pred.seq");
        assert_eq!(beside(&file), dir.path().join("pred.seq.manifest.json"));
    }
}
