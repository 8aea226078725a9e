//! Flat sectioned key-value text: `[section]` headers, `key = value` lines,
//! `#` or `;` comments.

use std::collections::BTreeMap;
use std::fmt;

/// A parse or validation failure tied to a location in the config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), field: None, message: message.into() }
    }

    pub fn field(field: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { line, field: Some(field.into()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.field) {
            (Some(l), Some(k)) => write!(f, "line {l}: field `{k}`: {}", self.message),
            (None, Some(k)) => write!(f, "field `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

/// A value together with the line it was read from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Parsed document: section name to key to entry.
#[derive(Clone, Debug, Default)]
pub struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = strip_comment(raw).trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at_line(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(ConfigError::at_line(line, format!("invalid section name `{name}`")));
                }
                if doc.sections.contains_key(name) {
                    return Err(ConfigError::at_line(line, format!("duplicate section [{name}]")));
                }
                doc.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::at_line(line, format!("expected `key = value`, found `{s}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::at_line(line, "empty key"));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| ConfigError::at_line(line, format!("key `{key}` appears before any section")))?;
            let table = doc.sections.get_mut(section).expect("section inserted");
            let full = format!("{section}.{key}");
            if table.contains_key(key) {
                return Err(ConfigError::field(full, Some(line), "duplicate key"));
            }
            table.insert(key.to_string(), Entry { value: value.trim().to_string(), line });
        }
        Ok(doc)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn sections(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, Entry>)> {
        self.sections.iter()
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|t| t.get(key))
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}
