//! Flat `key = value` configuration files.
//!
//! Each entry becomes the flag `--key value` inserted directly after the subcommand, ahead of
//! the flags typed on the command line, so typed flags override file entries.

use std::path::Path;

/// Global flags that take a value and may precede the subcommand.
const GLOBAL_VALUED: [&str; 3] = ["--config", "--out-dir", "--workers"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
}

/// Parses `key = value` lines; `#` starts a comment and blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>, String> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(format!("line {}: bad key {:?}", no + 1, k.trim()));
        }
        if key == "config" {
            return Err(format!("line {}: config files cannot nest", no + 1));
        }
        out.push(ConfigEntry {
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

fn entry_flags(entries: &[ConfigEntry]) -> Vec<String> {
    let mut flags = Vec::new();
    for e in entries {
        match e.value.as_str() {
            "true" => flags.push(format!("--{}", e.key)),
            "false" => {}
            v => {
                flags.push(format!("--{}", e.key));
                flags.push(v.to_string());
            }
        }
    }
    flags
}

/// Path given to `--config`, if any.
pub fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn subcommand_index(argv: &[String], subcommands: &[&str]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if subcommands.contains(&a) {
            return Some(i);
        }
        i += if GLOBAL_VALUED.contains(&a) { 2 } else { 1 };
    }
    None
}

/// `argv` with the config entries spliced in after the subcommand.
pub fn expand(argv: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| format!("cannot read config {path}: {e}"))?;
    let entries = parse_config(&text)?;
    let Some(at) = subcommand_index(&argv, subcommands) else {
        return Ok(argv);
    };
    let mut out = argv[..=at].to_vec();
    out.extend(entry_flags(&entries));
    out.extend(argv[at + 1..].iter().cloned());
    Ok(out)
}
