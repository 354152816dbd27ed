//! `key = value` configuration text: one entry per line, `#` starts a comment.
//! Keys may repeat; later entries override earlier ones for scalar lookups.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvFile {
    pub entries: Vec<Entry>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::spec(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::spec(format!("line {}", n + 1), "empty key"));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: n + 1,
            });
        }
        Ok(KvFile { entries })
    }

    /// Last value for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map(|e| e.value.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse_opt(key)?
            .ok_or_else(|| Error::spec(key, "missing required key"))
    }

    /// Rejects keys outside `allowed`, naming the first offender.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(Error::spec(&e.key, format!("unknown key on line {}", e.line))),
            None => Ok(()),
        }
    }
}

pub fn parse_value<T: FromStr>(field: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::spec(field, format!("cannot parse `{v}`")))
}

/// Parses `a=1 b=2 ...` attribute lists into a map; bare words are rejected.
pub fn parse_attrs(field: &str, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for tok in text.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::spec(field, format!("expected `name=value`, got `{tok}`")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Angle literal: a plain number of radians, `pi`, `pi/N`, `M*pi/N` or `Ndeg`.
pub fn parse_angle(field: &str, text: &str) -> Result<f64> {
    let t = text.trim().replace(' ', "");
    let bad = || Error::spec(field, format!("cannot parse angle `{text}`"));
    if let Some(deg) = t.strip_suffix("deg") {
        return deg.parse::<f64>().map(f64::to_radians).map_err(|_| bad());
    }
    if let Some(idx) = t.find("pi") {
        let (lhs, rest) = t.split_at(idx);
        let rest = &rest[2..];
        let mul = match lhs.strip_suffix('*').unwrap_or(lhs) {
            "" => 1.0,
            m => m.parse::<f64>().map_err(|_| bad())?,
        };
        let div = match rest.strip_prefix('/') {
            Some(d) => d.parse::<f64>().map_err(|_| bad())?,
            None if rest.is_empty() => 1.0,
            None => return Err(bad()),
        };
        return Ok(mul * std::f64::consts::PI / div);
    }
    t.parse::<f64>().map_err(|_| bad())
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(field: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(field, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_entries_and_comments() {
        let f = KvFile::parse("# header\na = 1\n\nb=two # trailing\na = 3\n").unwrap();
        assert_eq!(f.entries.len(), 3);
        assert_eq!(f.get("a"), Some("3"));
        assert_eq!(f.get("b"), Some("two"));
        assert_eq!(f.get_all("a").count(), 2);
        assert_eq!(f.require::<u32>("a").unwrap(), 3);
        assert!(matches!(f.require::<u32>("b"), Err(Error::Spec { .. })));
        assert!(f.check_keys(&["a"]).is_err());
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = KvFile::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn angles() {
        assert_eq!(parse_angle("a", "pi/12").unwrap(), PI / 12.0);
        assert_eq!(parse_angle("a", "2*pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("a", "pi").unwrap(), PI);
        assert_eq!(parse_angle("a", "0.5").unwrap(), 0.5);
        assert_eq!(parse_angle("a", "45deg").unwrap(), PI / 4.0);
        assert!(parse_angle("a", "pix").is_err());
    }

    #[test]
    fn attrs_and_lists() {
        let a = parse_attrs("object", "row=1 col=2").unwrap();
        assert_eq!(a["col"], "2");
        assert!(parse_attrs("object", "row=1 oops").is_err());
        assert_eq!(parse_list::<usize>("k", "1, 3,7").unwrap(), vec![1, 3, 7]);
    }
}
