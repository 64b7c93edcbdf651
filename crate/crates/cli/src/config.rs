//! `key=value` config files.
//!
//! Each key names a long flag of the chosen subcommand. The file's entries
//! are spliced into the argument list ahead of the user's own flags, and
//! since every argument overrides itself, flags given on the command line
//! win over the file.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::CliError;

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value, got {line:?}", idx + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", idx + 1)));
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

/// Converts config entries into flag tokens understood by `sub`.
pub fn entries_to_args(sub: &Command, entries: &[(String, String)]) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                CliError::Usage(format!("unknown config key {key:?} for `{}`", sub.get_name()))
            })?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => out.push(OsString::from(format!("--{key}"))),
                "false" | "no" | "0" | "off" => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "config key {key:?} expects true or false, got {value:?}"
                    )))
                }
            }
        } else {
            out.push(OsString::from(format!("--{key}={value}")));
        }
    }
    Ok(out)
}

/// Finds the value of `--config` anywhere after the subcommand.
pub fn find_config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter().skip(2);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Some(OsString::from(path));
        }
    }
    None
}

/// Returns `args` with the config file's entries inserted right after the
/// subcommand name.
pub fn expand_args(root: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = find_config_path(&args) else {
        return Ok(args);
    };
    let sub_name = args[1].to_string_lossy().into_owned();
    let Some(sub) = root.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| {
        CliError::Usage(format!("cannot read config file {}: {e}", Path::new(&path).display()))
    })?;
    let injected = entries_to_args(sub, &parse_config(&text)?)?;
    let mut out = Vec::with_capacity(args.len() + injected.len());
    out.extend(args[..2].iter().cloned());
    out.extend(injected);
    out.extend(args[2..].iter().cloned());
    Ok(out)
}
