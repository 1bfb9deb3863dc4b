//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parsed settings; later assignments to the same key win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses lines of `key = value`; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim().replace('-', "_");
            if k.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", i + 1)));
            }
            values.insert(k, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{key}: '{v}' is not a number ({e})")))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("{key}: '{v}' is not a count ({e})")))
            })
            .transpose()
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.keys() {
            if !allowed.contains(&k) {
                return Err(Error::Parse(format!("unknown setting '{k}'")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let s = Settings::parse("# run\nproblem = smooth\n\ndx=0.1 # coarse\ndx = 0.05\nmax-iter = 7\n")
            .unwrap();
        assert_eq!(s.get("problem"), Some("smooth"));
        assert_eq!(s.get_f64("dx").unwrap(), Some(0.05));
        assert_eq!(s.get_usize("max_iter").unwrap(), Some(7));
        assert_eq!(s.get("theta"), None);
        assert!(s.check_keys(&["problem", "dx", "max_iter"]).is_ok());
        assert!(s.check_keys(&["problem"]).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Settings::parse("just words").is_err());
        assert!(Settings::parse("= 3").is_err());
        assert!(Settings::parse("dx = abc").unwrap().get_f64("dx").is_err());
    }
}
