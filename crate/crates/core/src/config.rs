//! Plain-text run configuration: one `key = value` per line, `#` starts a
//! comment. Every key must be declared by the consumer; lookups record the
//! resolved value (explicit or default) for the echo file.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    allowed: Vec<String>,
    values: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn new(allowed: &[&str]) -> Self {
        RunConfig {
            allowed: allowed.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    /// Parse `text`, rejecting unknown keys and duplicates.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut cfg = RunConfig::new(allowed);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim();
            if cfg.values.contains_key(k) {
                return Err(config_err(k, format!("line {}: duplicate key", lineno + 1)));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    /// Set or override one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.allowed.iter().any(|a| a == key) {
            return Err(config_err(key, "unknown key"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_err(kv, "override must look like key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn raw(&mut self, key: &str, default: Option<&str>) -> Result<Option<String>> {
        assert!(
            self.allowed.iter().any(|a| a == key),
            "lookup of undeclared key {key}"
        );
        let v = self.values.get(key).cloned().or_else(|| default.map(String::from));
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.clone());
        }
        Ok(v)
    }

    pub fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: ToString,
    {
        let d = default.to_string();
        let v = self.raw(key, Some(&d))?.expect("default supplied");
        v.parse()
            .map_err(|_| config_err(key, format!("cannot parse `{v}`")))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self
            .raw(key, None)?
            .ok_or_else(|| config_err(key, "required key missing"))?;
        v.parse()
            .map_err(|_| config_err(key, format!("cannot parse `{v}`")))
    }

    pub fn get_str(&mut self, key: &str, default: &str) -> Result<String> {
        Ok(self.raw(key, Some(default))?.expect("default supplied"))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&mut self, key: &str, default: &str) -> Result<Vec<T>> {
        let v = self.raw(key, Some(default))?.expect("default supplied");
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| config_err(key, format!("cannot parse list entry `{s}`")))
            })
            .collect()
    }

    /// Resolved configuration in the input format, keys sorted.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# header\n pe = 0.5 # trailing\n\nde=2\nks = 3, 5,7\n";
        let mut c = RunConfig::parse(text, &["pe", "de", "ks", "t_final"]).unwrap();
        assert_eq!(c.get("pe", 0.0).unwrap(), 0.5);
        c.apply_override("de=3").unwrap();
        assert_eq!(c.get("de", 1.0).unwrap(), 3.0);
        assert_eq!(c.get_list::<usize>("ks", "").unwrap(), vec![3, 5, 7]);
        assert_eq!(c.get("t_final", 1.25).unwrap(), 1.25);
        let echo = c.echo();
        assert!(echo.contains("t_final = 1.25"));
        let again = RunConfig::parse(&echo, &["pe", "de", "ks", "t_final"]).unwrap();
        assert!(again.contains("ks"));
    }

    #[test]
    fn unknown_and_malformed_keys_name_the_key() {
        match RunConfig::parse("epsilno = 0.1", &["epsilon"]) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "epsilno"),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("epsilon 0.1", &["epsilon"]).is_err());
        assert!(RunConfig::parse("epsilon = 1\nepsilon = 2", &["epsilon"]).is_err());
        let mut c = RunConfig::parse("epsilon = abc", &["epsilon"]).unwrap();
        match c.get("epsilon", 0.1) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "epsilon"),
            other => panic!("{other:?}"),
        }
    }
}
