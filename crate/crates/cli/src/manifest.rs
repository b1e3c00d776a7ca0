use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::{read_json, to_json, write_text};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run, written next to its outputs.
///
/// `argv` holds the command line without the program name and without the
/// output directory, so replaying it into another directory reproduces the
/// same bytes, manifest included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Fully resolved configuration the command ran with.
    pub config: serde_json::Value,
    pub seed: u64,
    /// Output files, relative to the output directory.
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv,
            config,
            seed,
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(MANIFEST_FILE), &to_json(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Drops `--out <dir>` / `--out=<dir>` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn out_is_stripped() {
        assert_eq!(strip_out(&s(&["run", "--out", "d", "--nt", "5"])), s(&["run", "--nt", "5"]));
        assert_eq!(strip_out(&s(&["run", "--out=d"])), s(&["run"]));
    }
}
