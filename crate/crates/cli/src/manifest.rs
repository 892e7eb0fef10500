//! Run manifests: every report carries the full parameter set, input file
//! digests, seed, and output paths of the run that produced it, so equal
//! manifests mean byte-identical reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub inputs: Vec<(PathBuf, String)>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            ..RunManifest::default()
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let digest = digest_file(path)?;
        self.inputs.push((path.to_path_buf(), digest));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Comment-block rendering placed at the top of every report.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# bellkit {} report", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command: {}", self.command);
        for (key, value) in &self.parameters {
            let _ = writeln!(s, "# param: {key} = {value}");
        }
        for (path, digest) in &self.inputs {
            let _ = writeln!(s, "# input: {} sha256={digest}", path.display());
        }
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "# seed: {seed}");
            }
            None => {
                let _ = writeln!(s, "# seed: none");
            }
        }
        for path in &self.outputs {
            let _ = writeln!(s, "# output: {}", path.display());
        }
        s
    }
}

pub fn digest_file(path: &Path) -> Result<String> {
    let mut file =
        File::open(path).with_context(|| format!("cannot open input {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
