//! Flat `key = value` text files.
//!
//! Used for twin parameter files, run configurations and ensemble manifests.
//! Blank lines and lines starting with `#` are ignored; keys keep file order.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
            }
            if kv.get(key).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            kv.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Parses `key` if present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("key `{key}`: cannot parse {v:?}"))),
        }
    }

    /// Parses a required key.
    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse_opt(key)?
            .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// Parses a comma separated list of floats such as `20,30,40`.
pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
        })
        .collect()
}

pub fn format_f64_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# header\n a = 1.5 \n\nb=hello world\n").unwrap();
        assert_eq!(kv.get("a"), Some("1.5"));
        assert_eq!(kv.get("b"), Some("hello world"));
        assert_eq!(kv.require::<f64>("a").unwrap(), 1.5);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("just text").is_err());
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
        assert!(KeyValues::parse("= 2").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut kv = KeyValues::new();
        kv.set("x", 0.1 + 0.2);
        kv.set("name", "twin");
        let text = kv.to_text();
        let back = KeyValues::parse(&text).unwrap();
        assert_eq!(back, kv);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.require::<f64>("x").unwrap(), 0.1 + 0.2);
    }

    #[test]
    fn float_lists() {
        assert_eq!(parse_f64_list("20, 30,40").unwrap(), vec![20.0, 30.0, 40.0]);
        assert!(parse_f64_list("20,x").is_err());
        assert_eq!(format_f64_list(&[20.0, 30.5]), "20,30.5");
    }
}
