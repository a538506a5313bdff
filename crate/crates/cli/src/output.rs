//! Artifact writing. Every JSON artifact is wrapped with the tool version,
//! the command and the resolved config; non-JSON artifacts get a
//! `<file>.json` sidecar carrying the same header.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const TOOL: &str = "reprobe";

/// Malformed input data (as opposed to a bad config or an internal bug).
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a PipelineConfig,
    result: &'a T,
}

#[derive(Deserialize)]
struct Wrapped<T> {
    result: T,
}

#[derive(Serialize)]
struct Plan<'a> {
    command: &'a str,
    config: &'a PipelineConfig,
    inputs: Vec<&'a Path>,
    outputs: Vec<&'a Path>,
}

/// Everything a command needs besides its own arguments.
pub struct Ctx {
    pub command: &'static str,
    pub cfg: PipelineConfig,
    pub dry_run: bool,
}

impl Ctx {
    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    /// In dry-run mode prints the plan and returns `true`; the caller stops.
    pub fn plan(&self, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<bool> {
        if !self.dry_run {
            std::fs::create_dir_all(&self.cfg.out_dir)
                .with_context(|| format!("creating {}", self.cfg.out_dir.display()))?;
            return Ok(false);
        }
        let plan = Plan {
            command: self.command,
            config: &self.cfg,
            inputs: inputs.iter().map(PathBuf::as_path).collect(),
            outputs: outputs.iter().map(PathBuf::as_path).collect(),
        };
        println!("{}", serde_json::to_string_pretty(&plan)?);
        Ok(true)
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, result: &T) -> Result<()> {
        let a = Artifact {
            tool: TOOL,
            version: reprobe_core::VERSION,
            command: self.command,
            config: &self.cfg,
            result,
        };
        let text = serde_json::to_string_pretty(&a)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes a plain artifact and its provenance sidecar.
    pub fn write_with_sidecar<T: Serialize>(
        &self,
        path: &Path,
        body: &str,
        summary: &T,
    ) -> Result<()> {
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        self.write_json(&sidecar(path), summary)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    reprobe_core::inlp::sidecar_path(path)
}

/// Reads a JSON artifact, accepting either the wrapped form written by this
/// tool or the bare value.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| DataError(format!("{}: invalid JSON: {e}", path.display())))?;
    let parsed = if value.get("result").is_some() && value.get("tool").is_some() {
        serde_json::from_value::<Wrapped<T>>(value).map(|w| w.result)
    } else {
        serde_json::from_value(value)
    };
    parsed.map_err(|e| DataError(format!("{}: {e}", path.display())).into())
}

/// Header-indexed numeric CSV columns.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, DataError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| DataError(format!("{}: empty file", origin.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if cells.len() != header.len() {
                return Err(DataError(format!(
                    "{}: row {} has {} columns, header has {}",
                    origin.display(),
                    i + 2,
                    cells.len(),
                    header.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str, origin: &Path) -> Result<Vec<f64>, DataError> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError(format!("{}: no column {name:?}", origin.display())))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[idx].parse::<f64>().map_err(|_| {
                    DataError(format!(
                        "{}: row {}: {:?} is not a number",
                        origin.display(),
                        i + 2,
                        r[idx]
                    ))
                })
            })
            .collect()
    }
}
