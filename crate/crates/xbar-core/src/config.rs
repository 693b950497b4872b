//! Flat `key=value` config files.
//!
//! One `key=value` pair per line, `#` starts a comment, blank lines ignored.
//! Keys are case-sensitive and written exactly as the corresponding struct
//! field names.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Parsed key=value map, ordered by key for reproducible round-trips.
pub type KvMap = BTreeMap<String, String>;

pub fn parse_kv(text: &str) -> Result<KvMap> {
    let mut map = KvMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn emit_kv(map: &KvMap) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

pub fn get_f64(map: &KvMap, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key {key}: expected a number, got {v:?}"))),
    }
}

pub fn get_usize(map: &KvMap, key: &str) -> Result<Option<usize>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key {key}: expected an integer, got {v:?}"))),
    }
}

pub fn get_u64(map: &KvMap, key: &str) -> Result<Option<u64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key {key}: expected an integer, got {v:?}"))),
    }
}

pub fn get_bool(map: &KvMap, key: &str) -> Result<Option<bool>> {
    match map.get(key).map(|s| s.as_str()) {
        None => Ok(None),
        Some("true") | Some("1") => Ok(Some(true)),
        Some("false") | Some("0") => Ok(Some(false)),
        Some(v) => Err(Error::Config(format!(
            "key {key}: expected true/false/1/0, got {v:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let map = parse_kv("# header\n\nrows=64\ncols = 32  # trailing\n").unwrap();
        assert_eq!(map.get("rows").unwrap(), "64");
        assert_eq!(map.get("cols").unwrap(), "32");
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse_kv("rows 64").is_err());
        assert!(parse_kv("=3").is_err());
    }

    #[test]
    fn round_trip() {
        let map = parse_kv("b=2\na=1\n").unwrap();
        assert_eq!(emit_kv(&map), "a=1\nb=2\n");
    }
}
