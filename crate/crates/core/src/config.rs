//! Plain `key = value` configuration text.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Duplicate keys and keys that no consumer claims are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: line as u64,
        message: message.into(),
    }
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format_err(line_no, format!("expected 'key = value', got '{line}'")));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(format_err(line_no, format!("invalid key '{key}'")));
            }
            if value.is_empty() {
                return Err(format_err(line_no, format!("missing value for '{key}'")));
            }
            if entries
                .insert(key.to_string(), (value.to_string(), line_no))
                .is_some()
            {
                return Err(format_err(line_no, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse()
                .map(Some)
                .map_err(|_| format_err(line, format!("cannot parse value '{value}' for '{key}'"))),
        }
    }

    /// Removes `key` and parses it as a `lo,hi` pair.
    pub fn take_pair(&mut self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => {
                let parsed = value
                    .split_once(',')
                    .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
                parsed
                    .map(Some)
                    .ok_or_else(|| format_err(line, format!("expected 'a,b' for '{key}', got '{value}'")))
            }
        }
    }

    /// Overwrites `field` when `key` is present.
    pub fn update<T: FromStr>(&mut self, key: &str, field: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *field = v;
        }
        Ok(())
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(format_err(line, format!("unknown key '{key}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let mut kv = KeyValues::parse("# header\n a = 1.5 # trailing\n\nb=7\nr = 2, 3\n").unwrap();
        assert_eq!(kv.take::<f64>("a").unwrap(), Some(1.5));
        assert_eq!(kv.take::<usize>("b").unwrap(), Some(7));
        assert_eq!(kv.take_pair("r").unwrap(), Some((2.0, 3.0)));
        assert_eq!(kv.take::<f64>("missing").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn unknown_keys_fail_with_line() {
        let mut kv = KeyValues::parse("a = 1\nbogus = 2\n").unwrap();
        kv.take::<f64>("a").unwrap();
        match kv.finish() {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines() {
        for text in ["novalue", "= 3", "a =", "a = 1\na = 2", "bad key = 1"] {
            assert!(KeyValues::parse(text).is_err(), "{text}");
        }
        let mut kv = KeyValues::parse("a = x").unwrap();
        assert!(kv.take::<f64>("a").is_err());
    }
}
