//! Turns `--config FILE` and `--preset NAME` into ordinary flags.
//!
//! The expanded argument list is `[program, subcommand, preset flags...,
//! config-file flags..., remaining user flags...]`; clap is told to let later
//! occurrences override earlier ones, so user flags win over the file and the
//! file wins over the preset.

use std::ffi::OsString;

use crate::error::CliError;
use crate::presets::Preset;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Usage(format!("config line {}: bad key", n + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn as_flags(pairs: &[(String, String)]) -> Vec<OsString> {
    pairs
        .iter()
        .flat_map(|(k, v)| [OsString::from(format!("--{k}")), OsString::from(v)])
        .collect()
}

/// Removes every `--NAME VALUE` / `--NAME=VALUE` from `args` and returns the last value.
fn take_option(args: &mut Vec<OsString>, name: &str) -> Result<Option<String>, CliError> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut found = None;
    let mut i = 0;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == long {
            let v = args
                .get(i + 1)
                .ok_or_else(|| CliError::Usage(format!("{long} needs a value")))?
                .to_string_lossy()
                .into_owned();
            args.drain(i..i + 2);
            found = Some(v);
        } else if let Some(v) = a.strip_prefix(&prefix) {
            found = Some(v.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}

fn last_option(args: &[OsString], name: &str) -> Option<String> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut found = None;
    for (i, a) in args.iter().enumerate() {
        let a = a.to_string_lossy();
        if a == long {
            found = args.get(i + 1).map(|v| v.to_string_lossy().into_owned());
        } else if let Some(v) = a.strip_prefix(&prefix) {
            found = Some(v.to_string());
        }
    }
    found
}

/// Expands config file and preset into plain flags.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut args = argv;
    let config = take_option(&mut args, "config")?;
    // first positional after the program name is the subcommand
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let subcommand = args[sub].to_string_lossy().into_owned();
    let mut inserted = Vec::new();
    if let Some(path) = config {
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
        inserted = as_flags(&parse_config(&text)?);
    }
    let mut merged: Vec<OsString> = args[..=sub].to_vec();
    let rest = args[sub + 1..].to_vec();
    let mut probe = inserted.clone();
    probe.extend(rest.iter().cloned());
    if let Some(name) = last_option(&probe, "preset") {
        let preset = Preset::from_name(&name)
            .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))?;
        merged.extend(as_flags(&preset.defaults(&subcommand)));
    }
    merged.extend(inserted);
    merged.extend(rest);
    Ok(merged)
}
