//! Config resolution: command-line flag, then `--config` file, then the
//! built-in default. Every resolved value is recorded for the run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use atriamap_core::ModelKind;
use serde::Serialize;
use serde_json::Value;

/// A value that can be read from a config file line.
pub trait ConfigValue: Sized + Serialize {
    fn parse_value(s: &str) -> Result<Self, String>;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
        }
    )*};
}
from_str_value!(u64, usize, f64, f32, bool, String, PathBuf, ModelKind);

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys use the long flag names.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {line:?}", n + 1);
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("config line {}: duplicate key {key:?}", n + 1);
        }
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config(&text).with_context(|| format!("in config {}", p.display()))?
            }
            None => BTreeMap::new(),
        };
        Ok(Self { file, ..Self::default() })
    }

    /// Flag if given, else the config file entry, else `default`.
    pub fn value<T: ConfigValue>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`value`](Self::value) without a default; an absent value is
    /// recorded as null.
    pub fn optional<T: ConfigValue>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let from_file = self.file.get(key).cloned();
        if from_file.is_some() {
            self.used.insert(key.to_string());
        }
        let v = match (flag, from_file) {
            (Some(v), _) => Some(v),
            (None, Some(s)) => Some(T::parse_value(&s).map_err(|e| anyhow::anyhow!("config key {key:?}: {e}"))?),
            (None, None) => None,
        };
        match &v {
            Some(v) => self.record(key, v),
            None => {
                self.resolved.insert(key.to_string(), Value::Null);
            }
        }
        Ok(v)
    }

    fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        self.resolved.insert(key.to_string(), serde_json::to_value(v).expect("config values serialize"));
    }

    /// Resolved values. Config file keys this command never asked for are
    /// reported as warnings.
    pub fn finish(self) -> BTreeMap<String, Value> {
        for key in self.file.keys().filter(|k| !self.used.contains(*k)) {
            log::warn!("config key {key:?} is not used by this command");
        }
        self.resolved
    }
}

/// Three grid dimensions from a list.
pub fn dims3(v: &[usize]) -> Result<[usize; 3]> {
    match v {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => bail!("expected three dimensions, got {}", v.len()),
    }
}
