//! Layered settings: command-line flag, then config file, then default.

use std::path::Path;

use hsk_core::{Error, Result};
use serde::de::DeserializeOwned;

/// Reads a command's settings from `path`, which holds either the bare
/// settings object or a `run.json` manifest written by the same command.
/// Without a path the defaults apply.
pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        Error::InvalidArgument(format!("config {} is not JSON: {e}", path.display()))
    })?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("tool_version") && obj.contains_key("config") {
            let recorded = obj
                .get("command")
                .and_then(|c| c.as_str())
                .unwrap_or_default();
            if recorded != command {
                return Err(Error::InvalidArgument(format!(
                    "{} is a manifest of `{recorded}`, not `{command}`",
                    path.display()
                )));
            }
            value = obj.remove("config").unwrap_or_default();
        }
    }
    serde_json::from_value(value)
        .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
}

/// Named input files must exist; a wrong path is a usage error.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

/// Overwrites `slot` when a flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
