use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::FormatError;

/// Ordered `key=value` map. Blank lines and `#` comments are ignored; keys are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(FormatError::MalformedLine {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(FormatError::MalformedLine {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(FormatError::DuplicateKey {
                    line: idx + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, FormatError> {
        self.get(key)
            .ok_or_else(|| FormatError::MissingKey(key.to_string()))
    }

    /// Parses `key` if present; `Ok(None)` when absent.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, FormatError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| FormatError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, FormatError> {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T, FormatError> {
        self.parse_opt(key)?
            .ok_or_else(|| FormatError::MissingKey(key.to_string()))
    }

    /// Comma-separated list of numbers.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, FormatError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| FormatError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# noise\n a = 1.5 \n\nmode=reference\n").unwrap();
        assert_eq!(kv.parse_required::<f64>("a").unwrap(), 1.5);
        assert_eq!(kv.get("mode"), Some("reference"));
        assert!(kv.get("missing").is_none());
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KeyValues::parse("a=1\na=2"),
            Err(FormatError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(
            KeyValues::parse("just words"),
            Err(FormatError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            KeyValues::parse("=3"),
            Err(FormatError::MalformedLine { .. })
        ));
    }

    #[test]
    fn bad_value_reports_key() {
        let kv = KeyValues::parse("lr=fast").unwrap();
        assert!(matches!(
            kv.parse_required::<f64>("lr"),
            Err(FormatError::BadValue { .. })
        ));
    }

    #[test]
    fn lists_and_text_round_trip() {
        let mut kv = KeyValues::new();
        kv.set("layers", "32,32");
        kv.set("seed", 7);
        let back = KeyValues::parse(&kv.to_text()).unwrap();
        assert_eq!(back, kv);
        assert_eq!(back.parse_list::<usize>("layers").unwrap(), Some(vec![32, 32]));
    }
}
