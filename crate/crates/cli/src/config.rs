//! `--config FILE`: flat `key = value` lines mirroring the long flags.
//!
//! The file's entries are spliced in as flags directly after the subcommand,
//! so anything given on the command line comes later and wins. `true` turns
//! a switch on, `false` leaves it off. Unknown keys fail like unknown flags.

use std::ffi::OsString;
use std::path::Path;

use crate::commands::CliError;

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut found = None;
    let mut iter = argv.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            found = iter.next().cloned();
        } else if let Some(path) = s.strip_prefix("--config=") {
            found = Some(path.into());
        }
    }
    found
}

/// Index just past the subcommand (and the study kind for `study`).
fn insertion_point(argv: &[OsString]) -> Option<usize> {
    let positional: Vec<usize> = (1..argv.len())
        .filter(|&i| !argv[i].to_string_lossy().starts_with('-'))
        .collect();
    let first = *positional.first()?;
    if argv[first] == "study" {
        positional.get(1).map(|i| i + 1)
    } else {
        Some(first + 1)
    }
}

pub fn parse_file(text: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |why: &str| CliError::Usage(format!("{}:{}: {why}", path.display(), n + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(bad("invalid key"));
        }
        if key == "config" {
            return Err(bad("config files cannot include other config files"));
        }
        let flag = format!(
            "--{}",
            if key == "T" {
                key.to_string()
            } else {
                key.replace('_', "-")
            }
        );
        match value {
            "true" => flags.push(flag.into()),
            "false" => {}
            _ => {
                flags.push(flag.into());
                flags.push(value.into());
            }
        }
    }
    Ok(flags)
}

pub fn expand(mut argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(at) = insertion_point(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let flags = parse_file(&text, path)?;
    argv.splice(at..at, flags);
    Ok(argv)
}
