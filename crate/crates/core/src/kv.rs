//! Flat `key = value` text files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    /// Blank lines and `#` comments are skipped; keys may appear once.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::Config(format!("{source}:{line}: expected `key = value`")));
            };
            let key = k.trim().to_owned();
            if key.is_empty() {
                return Err(Error::Config(format!("{source}:{line}: empty key")));
            }
            let entry = Entry {
                value: v.trim().to_owned(),
                line,
            };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                return Err(Error::Config(format!(
                    "{source}:{line}: duplicate key `{key}` (first on line {})",
                    prev.line
                )));
            }
        }
        Ok(KeyValues {
            source: source.to_owned(),
            entries,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Typed lookup; `Ok(None)` if absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                Error::Config(format!("{}:{}: {key}: {err}", self.source, e.line))
            }),
        }
    }

    /// Comma-separated list; `Ok(None)` if absent.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>()
                        .map_err(|err| Error::Config(format!("{}:{}: {key}: {err}", self.source, e.line)))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Errors naming every key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !allowed.contains(k.as_str()))
            .map(|(k, e)| format!("`{k}` (line {})", e.line))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("{}: unknown keys {}", self.source, unknown.join(", "))))
        }
    }
}
