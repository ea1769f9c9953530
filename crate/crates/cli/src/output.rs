use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MANIFEST_SCHEMA: &str = "wafer-spr/manifest/v1";

/// Everything needed to replay a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<String>,
    pub seed: u64,
    pub format: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<String>, seed: u64, format: &str, config: serde_json::Value) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            tool: "wafer-spr",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            inputs,
            seed,
            format: format.to_string(),
            config,
            outputs: Vec::new(),
        }
    }
}

/// Writes outputs into `--out` when given; otherwise only the primary output
/// goes to stdout and nothing else is written.
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    pub fn primary(&mut self, name: &str, content: &str) -> CliResult<()> {
        if self.dir.is_some() {
            self.secondary(name, content)
        } else {
            std::io::stdout()
                .write_all(content.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }

    pub fn secondary(&mut self, name: &str, content: &str) -> CliResult<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> CliResult<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        manifest.outputs = std::mem::take(&mut self.written);
        let text = to_json(&manifest)?;
        self.secondary("manifest.json", &text)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    Ok(text)
}
