//! Flat `key = value` run configuration with per-command schemas.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// One accepted key: name, default (if any) and a short description.
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Some(default),
        help,
    }
}

pub const fn required(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: None,
        help,
    }
}

/// Keys every command accepts.
pub const COMMON: &[Key] = &[
    key("seed", "0", "RNG seed"),
    key("out", "out", "output directory"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// a repeated key is an error.
pub fn parse_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("{origin}:{}: expected key = value", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::validation(format!("{origin}:{}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::validation(format!("{origin}:{}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Layers, lowest precedence first: schema defaults, the config file,
    /// `--set` overrides, then `--seed` / `--out`. Any key outside the schema
    /// is rejected.
    pub fn load(
        schema: &[Key],
        file: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for k in COMMON.iter().chain(schema) {
            if let Some(d) = k.default {
                values.insert(k.name.to_string(), d.to_string());
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
            values.extend(parse_text(&text, &path.display().to_string())?);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::validation(format!("--set expects key=value, got `{o}`")))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(s) = seed {
            values.insert("seed".into(), s.to_string());
        }
        if let Some(o) = out {
            values.insert("out".into(), o.display().to_string());
        }

        let known: Vec<&str> = COMMON.iter().chain(schema).map(|k| k.name).collect();
        let unknown: Vec<&String> = values.keys().filter(|k| !known.contains(&k.as_str())).collect();
        if !unknown.is_empty() {
            let list = unknown.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ");
            return Err(CliError::validation(format!("unknown config key(s) {list}")));
        }
        if let Some(k) = schema.iter().find(|k| !values.contains_key(k.name)) {
            return Err(CliError::validation(format!("missing required key `{}` ({})", k.name, k.help)));
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| CliError::validation(format!("key `{key}`: {e}")))
    }

    /// Comma-separated list; an empty value is the empty list.
    pub fn list<T>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::validation(format!("key `{key}`: `{s}`: {e}"))))
            .collect()
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out"))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }
}

/// Renders a schema for `--help` style listings.
pub fn describe(schema: &[Key]) -> String {
    COMMON
        .iter()
        .chain(schema)
        .map(|k| match k.default {
            Some(d) => format!("  {:<20} {} (default `{d}`)", k.name, k.help),
            None => format!("  {:<20} {} (required)", k.name, k.help),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
