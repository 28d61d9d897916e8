//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names of the subcommand (`batch-size` or
//! `batch_size`). Entries are turned into `--key=value` arguments placed
//! before the command-line flags, so flags given explicitly win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Parses `text`, rejecting keys outside `known`.
pub fn parse(text: &str, known: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::ConfigLine {
            line: k + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim().replace('_', "-");
        if key == "config" || !known.iter().any(|k| *k == key) {
            return Err(CliError::UnknownKey { key, line: k + 1 });
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

/// Reads a configuration file into `--key=value` arguments.
pub fn file_args(path: &Path, known: &[String]) -> Result<Vec<OsString>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse(&text, known)?
        .into_iter()
        .map(|(k, v)| OsString::from(format!("--{k}={v}")))
        .collect())
}
