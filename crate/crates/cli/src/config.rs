//! Sectioned key-value configuration files.
//!
//! Format: `[section]` headers followed by `key = value` lines; `#` or `;`
//! start a comment. Unknown sections and keys are rejected, duplicate keys
//! are rejected, and every error carries the offending line number.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfigValue {
    pub value: String,
    pub line: usize,
}

/// Parsed config: section -> key -> value.
#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, ConfigValue>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, ConfigValue>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw
                .find(['#', ';'])
                .map(|pos| &raw[..pos])
                .unwrap_or(raw)
                .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                    .trim()
                    .to_string();
                if name.is_empty() {
                    return Err(ConfigError::at(line_no, "empty section name"));
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line_no, "expected 'key = value'"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::at(line_no, "empty key"));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line_no, format!("key '{key}' has an empty value")));
            }
            let section = current
                .clone()
                .ok_or_else(|| ConfigError::at(line_no, "key before any [section] header"))?;
            let entry = sections.get_mut(&section).unwrap();
            if entry.contains_key(&key) {
                return Err(ConfigError::at(line_no, format!("duplicate key '{key}' in [{section}]")));
            }
            entry.insert(key, ConfigValue { value, line: line_no });
        }
        Ok(Self { sections })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::general(format!("cannot read '{}': {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn has_key(&self, section: &str, key: &str) -> bool {
        self.sections.get(section).is_some_and(|s| s.contains_key(key))
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&ConfigValue> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    /// Insert or replace a value (used by flag and sweep overrides).
    pub fn set(&mut self, section: &str, key: &str, value: String) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), ConfigValue { value, line: 0 });
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&ConfigValue, ConfigError> {
        if !self.has_section(section) {
            return Err(ConfigError::general(format!(
                "missing [{section}] section (needs key '{key}')"
            )));
        }
        self.get(section, key).ok_or_else(|| {
            ConfigError::general(format!("missing key '{key}' in [{section}]"))
        })
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .value
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ConfigError::at(v.line, format!("bad number '{}' for '{key}'", v.value))),
        }
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let v = self.require(section, key)?;
        v.value
            .parse::<f64>()
            .map_err(|_| ConfigError::at(v.line, format!("bad number '{}' for '{key}'", v.value)))
    }

    pub fn get_u32(&self, section: &str, key: &str) -> Result<Option<u32>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .value
                .parse::<u32>()
                .map(Some)
                .map_err(|_| ConfigError::at(v.line, format!("bad integer '{}' for '{key}'", v.value))),
        }
    }

    pub fn require_u32(&self, section: &str, key: &str) -> Result<u32, ConfigError> {
        let v = self.require(section, key)?;
        v.value
            .parse::<u32>()
            .map_err(|_| ConfigError::at(v.line, format!("bad integer '{}' for '{key}'", v.value)))
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|v| v.value.as_str())
    }

    pub fn get_bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => match v.value.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                other => Err(ConfigError::at(v.line, format!("bad boolean '{other}' for '{key}'"))),
            },
        }
    }

    /// Reject unknown sections and keys against a schema of
    /// `(section, allowed keys)` pairs.
    pub fn validate_schema(&self, schema: &[(&str, &[&str])]) -> Result<(), ConfigError> {
        for (section, keys) in &self.sections {
            let allowed = schema.iter().find(|(name, _)| name == section);
            let Some((_, allowed_keys)) = allowed else {
                return Err(ConfigError::general(format!("unknown section [{section}]")));
            };
            for (key, value) in keys {
                if !allowed_keys.contains(&key.as_str()) {
                    return Err(ConfigError::at(
                        value.line.max(1),
                        format!("unknown key '{key}' in [{section}]"),
                    ));
                }
            }
        }
        Ok(())
    }
}
