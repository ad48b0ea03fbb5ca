//! Flat `key=value` text: one pair per line, `#` comments, blank lines ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{config_err, Result};

pub fn parse_kv(text: &str, context: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            config_err!(
                "{context}: line {}: expected key=value, got {line:?}",
                i + 1
            )
        })?;
        let k = k.trim();
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(config_err!("{context}: line {}: duplicate key {k}", i + 1));
        }
    }
    Ok(map)
}

pub fn format_kv<K: AsRef<str>>(entries: &[(K, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{}={v}", k.as_ref());
    }
    s
}

pub fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(config_err!("expected a boolean, got {other:?}")),
    }
}

pub fn parse_num<N: FromStr>(s: &str) -> Result<N> {
    s.trim()
        .parse()
        .map_err(|_| config_err!("expected a number, got {s:?}"))
}

pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(parse_num).collect()
}

pub fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Typed lookups on a parsed map, naming the key in every error.
pub struct KvView<'a> {
    pub map: &'a BTreeMap<String, String>,
    pub context: &'a str,
}

impl KvView<'_> {
    pub fn str(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| config_err!("{}: missing key {key}", self.context))
    }

    pub fn num<N: FromStr>(&self, key: &str) -> Result<N> {
        parse_num(self.str(key)?).map_err(|e| config_err!("{}: {key}: {e}", self.context))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        parse_bool(self.str(key)?).map_err(|e| config_err!("{}: {key}: {e}", self.context))
    }

    pub fn list(&self, key: &str) -> Result<Vec<usize>> {
        parse_list(self.str(key)?).map_err(|e| config_err!("{}: {key}: {e}", self.context))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reject() {
        let m = parse_kv("# c\na = 1\n\nb=x=y\n", "t").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "x=y");
        assert!(parse_kv("a=1\na=2", "t").is_err());
        assert!(parse_kv("nonsense", "t").is_err());
        assert_eq!(format_kv(&[("a", "1".to_string())]), "a=1\n");
    }
}
