//! Optional JSON config file: one section per subcommand, keys mirroring
//! that command's long flags. Explicitly passed flags override file values.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{usage, CliError};

#[derive(Default)]
pub struct FileConfig {
    root: Option<serde_json::Value>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let root: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !root.is_object() {
        return Err(usage(format!(
            "config {} must be a JSON object with one section per command",
            path.display()
        )));
    }
    Ok(FileConfig { root: Some(root) })
}

impl FileConfig {
    /// Deserialize the section for `command` into a struct of optional
    /// fields. Missing section means all-default; unknown keys are usage
    /// errors.
    pub fn section<T: DeserializeOwned + Default>(&self, command: &str) -> Result<T, CliError> {
        let Some(root) = &self.root else {
            return Ok(T::default());
        };
        match root.get(command) {
            None => Ok(T::default()),
            Some(section) => serde_json::from_value(section.clone())
                .map_err(|e| usage(format!("config section {command:?}: {e}"))),
        }
    }
}

/// Resolve one setting: explicit flag, then config file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Resolve a required setting that has no default.
pub fn pick_required<T>(
    flag: Option<T>,
    file: Option<T>,
    name: &str,
) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| usage(format!("missing required --{name} (flag or config)")))
}
