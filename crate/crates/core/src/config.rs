//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [table]
//! disk = 0.0 0.0 0.4     # x y radius; key may repeat
//! cap = 50
//! ```
//!
//! UTF-8 text, `#` starts a comment anywhere on a line, section headers are
//! `[name]`, keys may repeat, and every key must sit inside a section. A file
//! with no entries is rejected.

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("missing key [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("line {line}: invalid value for [{section}] {key}: {msg}")]
    Invalid { section: String, key: String, line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.value.parse().map_err(|e: T::Err| self.invalid(e.to_string()))
    }

    /// Whitespace-separated list.
    pub fn parse_list<T: FromStr>(&self) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: T::Err| self.invalid(format!("{s:?}: {e}"))))
            .collect()
    }

    pub fn invalid(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { section: self.section.clone(), key: self.key.clone(), line: self.line, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: Vec<Entry>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut section: Option<String> = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            let column = content.len() - content.trim_start().len() + 1;
            let err = |column: usize, msg: &str| ConfigError::Parse { line, column, msg: msg.to_string() };
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(column + trimmed.len(), "expected ']'"))?.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                    return Err(err(column + 1, "invalid section name"));
                }
                section = Some(name.to_string());
                continue;
            }
            let eq = trimmed.find('=').ok_or_else(|| err(column, "expected 'key = value'"))?;
            let key = trimmed[..eq].trim();
            let value = trimmed[eq + 1..].trim();
            if key.is_empty() || !key.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                return Err(err(column, "invalid key"));
            }
            if value.is_empty() {
                return Err(err(column + eq + 1, "empty value"));
            }
            let section = section.clone().ok_or_else(|| err(column, "key outside of any [section]"))?;
            entries.push(Entry { section, key: key.to_string(), value: value.to_string(), line });
        }
        if entries.is_empty() {
            return Err(ConfigError::Parse { line: 1, column: 1, msg: "empty configuration".into() });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.entries.iter().any(|e| e.section == section)
    }

    /// Last occurrence of `key` in `section`.
    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.section == section && e.key == key)
    }

    pub fn get_all<'a>(&'a self, section: &'a str, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.section == section && e.key == key)
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&Entry, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| ConfigError::Missing { section: section.to_string(), key: key.to_string() })
    }

    pub fn value<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.require(section, key)?.parse()
    }

    pub fn value_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(section, key).map_or(Ok(default), Entry::parse)
    }

    /// Overrides (or inserts) a value, as if it were the last line.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.entries.push(Entry { section: section.into(), key: key.into(), value: value.into(), line: 0 });
    }

    /// Rejects keys in `section` outside `allowed`.
    pub fn ensure_only(&self, section: &str, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| e.section == section && !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(e.invalid(format!("unknown key (expected one of: {})", allowed.join(", ")))),
            None => Ok(()),
        }
    }
}
