//! Flat `key = value` config files. Keys are flag names without the leading
//! dashes (`pi-design`, `truncate`, ...); `#` starts a comment line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigFile {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`, got `{line}`", lineno + 1);
            };
            let key = normalize_key(key);
            if !allowed.contains(&key.as_str()) {
                bail!("config line {}: unknown key `{key}` (allowed: {})", lineno + 1, allowed.join(", "));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("config line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, allowed).with_context(|| format!("in config {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// `flag` if given on the command line, else the file value.
    pub fn merge(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.get(key).map(str::to_string))
    }

    pub fn merge_parsed<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}`: cannot parse `{v}`: {e}")),
        }
    }

    pub fn merge_bool(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.get(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => bail!("config key `{key}`: expected a boolean, got `{v}`"),
            },
        }
    }
}

/// Renders resolved settings in the same format, suitable for `--config`.
pub fn render(entries: &[(&str, String)]) -> String {
    entries
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[&str] = &["seed", "pi-design", "literal-aipw"];

    #[test]
    fn parses_and_merges() {
        let c = ConfigFile::parse("# comment\nseed = 7\npi_design = x1 + x2^2\n", KEYS).unwrap();
        assert_eq!(c.get("pi-design"), Some("x1 + x2^2"));
        assert_eq!(c.merge_parsed::<u64>(None, "seed").unwrap(), Some(7));
        assert_eq!(c.merge_parsed(Some(9u64), "seed").unwrap(), Some(9));
        assert!(!c.merge_bool(false, "literal-aipw").unwrap());
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ConfigFile::parse("colour = red", KEYS).is_err());
        assert!(ConfigFile::parse("seed = 1\nseed = 2", KEYS).is_err());
        assert!(ConfigFile::parse("seed 1", KEYS).is_err());
    }

    #[test]
    fn render_round_trips() {
        let text = render(&[("seed", "3".into()), ("pi-design", "x1".into()), ("literal-aipw", String::new())]);
        let c = ConfigFile::parse(&text, KEYS).unwrap();
        assert_eq!(c.get("seed"), Some("3"));
        assert_eq!(c.get("literal-aipw"), None);
    }
}
