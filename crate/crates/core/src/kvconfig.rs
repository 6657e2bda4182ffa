//! Flat `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Typed configs
//! implement [`ConfigFields`] (usually through [`kv_fields!`](crate::kv_fields)),
//! which rejects unknown keys and renders a canonical snapshot.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::{CoreError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CoreError::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CoreError::Config(format!("line {}: empty key", lineno + 1)));
            }
            cfg.entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CoreError::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> Self {
        let p = format!("{prefix}.");
        Self {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Entries whose key does not start with any of `prefixes` followed by `.`.
    pub fn without_sections(&self, prefixes: &[&str]) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| !prefixes.iter().any(|p| k.starts_with(&format!("{p}."))))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Adds every entry of `other` under `prefix.`.
    pub fn extend_section(&mut self, prefix: &str, other: &Self) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}.{k}"), v.clone());
        }
    }

    /// Canonical text: sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Hex SHA-256 of [`to_text`](Self::to_text).
    pub fn hash(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CoreError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

/// A typed configuration with a fixed key set.
pub trait ConfigFields: Default {
    /// Sets one key; `Ok(false)` if the key is unknown.
    fn set_field(&mut self, key: &str, value: &str) -> Result<bool>;

    /// All keys with their current values, in declaration order.
    fn fields(&self) -> Vec<(String, String)>;

    /// Default values overridden by `kv`; unknown keys are an error.
    fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut out = Self::default();
        out.update(kv)?;
        Ok(out)
    }

    fn update(&mut self, kv: &KvConfig) -> Result<()> {
        for (k, v) in kv.iter() {
            if !self.set_field(k, v)? {
                return Err(CoreError::Config(format!("unknown key {k:?}")));
            }
        }
        Ok(())
    }

    fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        for (k, v) in self.fields() {
            kv.set(k, v);
        }
        kv
    }
}

/// Implements [`ConfigFields`] by mapping string keys to (possibly nested)
/// struct fields that implement `FromStr` and `Display`.
#[macro_export]
macro_rules! kv_fields {
    ($ty:ty { $($key:literal => $($field:ident).+),* $(,)? }) => {
        impl $crate::kvconfig::ConfigFields for $ty {
            fn set_field(&mut self, key: &str, value: &str) -> $crate::Result<bool> {
                match key {
                    $($key => {
                        self.$($field).+ = $crate::kvconfig::parse_value(key, value)?;
                        Ok(true)
                    })*
                    _ => Ok(false),
                }
            }

            fn fields(&self) -> Vec<(String, String)> {
                vec![$(($key.to_string(), self.$($field).+.to_string())),*]
            }
        }
    };
}
