//! Resolved run configurations written next to every output.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use audiodist::eval::report::to_canonical_json;

pub const FILE_NAME: &str = "run_config.json";

#[derive(Serialize)]
pub struct RunConfig<'a, P: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: &'a str,
    pub threads: Option<usize>,
    pub params: P,
}

impl<'a, P: Serialize> RunConfig<'a, P> {
    pub fn new(command: &'a str, threads: Option<usize>, params: P) -> Self {
        Self {
            tool: "audiodist",
            version: env!("CARGO_PKG_VERSION"),
            schema_version: audiodist::SCHEMA_VERSION,
            command,
            threads,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(to_canonical_json(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// Reads a TOML config file, or JSON when the extension is `.json`.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .map_err(|e| audiodist::Error::Config(format!("{}: {e}", path.display())).into())
    } else {
        toml::from_str(&text)
            .map_err(|e| audiodist::Error::Config(format!("{}: {e}", path.display())).into())
    }
}
