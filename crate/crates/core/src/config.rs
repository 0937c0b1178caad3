//! Flat `key = value` text configs.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key/value pairs; later assignments override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    /// Parses lines of `key = value`; `#` starts a comment, blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: no + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: no + 1,
                    msg: "empty key".into(),
                });
            }
            cfg.entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("override `{assignment}` is not key=value")))?;
        self.entries.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key outside `known`.
    pub fn reject_unknown(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        match self.keys().find(|k| !known(k)) {
            Some(k) => Err(Error::invalid(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::invalid(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    /// Comma-separated list.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<T>()
                            .map_err(|_| Error::invalid(format!("bad list entry `{p}` for `{key}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Renders back to text, one key per line in sorted order.
    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn format_list<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_overrides_and_lists() {
        let mut c = KvConfig::parse("# head\nlr = 0.004\n\ndims = 16, 32 # trailing\n").unwrap();
        c.set("lr=0.01").unwrap();
        assert_eq!(c.parse_value::<f64>("lr").unwrap(), Some(0.01));
        assert_eq!(c.parse_list::<usize>("dims").unwrap(), Some(vec![16, 32]));
        assert_eq!(c.parse_value::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn malformed_lines_and_values() {
        assert!(matches!(KvConfig::parse("a = 1\nnope\n"), Err(Error::Parse { line: 2, .. })));
        let c = KvConfig::parse("x = abc").unwrap();
        assert!(c.parse_value::<f64>("x").is_err());
        assert!(c.reject_unknown(|k| k == "y").is_err());
    }

    #[test]
    fn render_round_trips() {
        let c = KvConfig::parse("b = 2\na = x y\n").unwrap();
        assert_eq!(KvConfig::parse(&c.render()).unwrap(), c);
    }
}
