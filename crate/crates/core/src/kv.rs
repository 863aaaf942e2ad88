//! Flat `key = value` text with `[section]` headers, used for run
//! configuration files and checkpoint manifests.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered `(section, key, value)` entries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: Vec<(String, String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut doc = KvDoc::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected key = value, got {line:?}"),
                });
            };
            doc.set(&section, k.trim(), v.trim());
        }
        Ok(doc)
    }

    /// Inserts or replaces `key` in `section`.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(s, k, _)| s == section && k == key) {
            Some(e) => e.2 = value,
            None => self.entries.push((section.into(), key.into(), value)),
        }
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn section(&self, section: &str) -> impl Iterator<Item = (&str, &str)> {
        let section = section.to_string();
        self.entries
            .iter()
            .filter(move |(s, _, _)| *s == section)
            .map(|(_, k, v)| (k.as_str(), v.as_str()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.entries.iter().map(|(s, k, v)| (s.as_str(), k.as_str(), v.as_str()))
    }

    /// Sections in first-appearance order, keys in insertion order.
    pub fn render(&self) -> String {
        let mut sections: Vec<&str> = Vec::new();
        for (s, _, _) in &self.entries {
            if !sections.contains(&s.as_str()) {
                sections.push(s);
            }
        }
        let mut out = String::new();
        for (n, s) in sections.iter().enumerate() {
            if n > 0 {
                out.push('\n');
            }
            if !s.is_empty() {
                let _ = writeln!(out, "[{s}]");
            }
            for (k, v) in self.section(s) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}
