//! Layered run configuration: defaults, then a flat `key = value` config
//! file, then command-line flags, with later layers winning. Every
//! resolved value is recorded so the manifest can state exactly what a run
//! used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sigdraw::{Error, Result};

/// Collects settings for one subcommand run.
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    /// Starts from an optional config file. Lines are `key = value`; blank
    /// lines and `#` comments are ignored.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::invalid(format!(
                        "config line {}: expected 'key = value', got '{line}'",
                        no + 1
                    ))
                })?;
                let key = key.trim().to_string();
                if file.contains_key(&key) {
                    return Err(Error::invalid(format!(
                        "config line {}: duplicate key '{key}'",
                        no + 1
                    )));
                }
                file.insert(key, value.trim().to_string());
            }
        }
        Ok(Settings { file, used: BTreeSet::new(), resolved: BTreeMap::new() })
    }

    fn file_value(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.file.get(key).cloned()
    }

    /// Resolves one setting: flag beats config file beats default.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match (flag, self.file_value(key)) {
            (Some(v), _) => v,
            (None, Some(text)) => text.parse().map_err(|e| {
                Error::invalid(format!("config key '{key}': cannot parse '{text}': {e}"))
            })?,
            (None, None) => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Resolves an optional setting with no default.
    pub fn get_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match (flag, self.file_value(key)) {
            (Some(v), _) => Some(v),
            (None, Some(text)) => Some(text.parse().map_err(|e| {
                Error::invalid(format!("config key '{key}': cannot parse '{text}': {e}"))
            })?),
            (None, None) => None,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        } else {
            self.resolved.insert(key.to_string(), String::new());
        }
        Ok(value)
    }

    /// Resolves a setting whose string form needs custom parsing (lists,
    /// ranges). The manifest records the string form.
    pub fn get_with<V>(
        &mut self,
        key: &str,
        flag: Option<String>,
        default: &str,
        parse: impl FnOnce(&str) -> Result<V>,
    ) -> Result<V> {
        let text = flag.or_else(|| self.file_value(key)).unwrap_or_else(|| default.to_string());
        let value = parse(&text)
            .map_err(|e| Error::invalid(format!("setting '{key}' = '{text}': {e}")))?;
        self.resolved.insert(key.to_string(), text);
        Ok(value)
    }

    /// A required setting with no default.
    pub fn require(&mut self, key: &str, flag: Option<String>) -> Result<String> {
        let value = flag
            .or_else(|| self.file_value(key))
            .ok_or_else(|| Error::invalid(format!("missing required setting '{key}'")))?;
        self.resolved.insert(key.to_string(), value.clone());
        Ok(value)
    }

    /// Finishes resolution: rejects config-file keys no setting consumed
    /// (catching typos), and hands back the resolved map for the manifest.
    pub fn finish(self) -> Result<BTreeMap<String, String>> {
        for key in self.file.keys() {
            if !self.used.contains(key) {
                return Err(Error::invalid(format!(
                    "config key '{key}' is not recognized by this subcommand"
                )));
            }
        }
        Ok(self.resolved)
    }
}

/// Parses `a,b,c` into floats.
pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    let items: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad number '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::invalid("empty list"));
    }
    Ok(items)
}

/// Parses `a..b` (inclusive) or `a,b,c` into a list of positive integers.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    let parse_one = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| Error::invalid(format!("bad integer '{s}': {e}")))
    };
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
        if lo > hi {
            return Err(Error::invalid(format!("empty range {lo}..{hi}")));
        }
        return Ok((lo..=hi).collect());
    }
    let items: Vec<usize> = text.split(',').map(parse_one).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::invalid("empty list"));
    }
    Ok(items)
}
