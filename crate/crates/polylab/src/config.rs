//! Flat `key = value` configuration files with `#` comments. Parse errors
//! carry line numbers so the CLI can point at the offending line.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {}: {}", l, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError {
                message: format!("expected `key = value`, got `{raw}`"),
                line: Some(idx + 1),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError {
                    message: "empty key".to_string(),
                    line: Some(idx + 1),
                });
            }
            map.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Config { map })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.map.iter()
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError {
                message: format!("`{key}` must be a number, got `{v}`"),
                line: None,
            }),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError {
                message: format!("`{key}` must be a non-negative integer, got `{v}`"),
                line: None,
            }),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError {
                message: format!("`{key}` must be a non-negative integer, got `{v}`"),
                line: None,
            }),
        }
    }

    /// Comma-separated list of numbers.
    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|tok| {
                    tok.trim().parse().map_err(|_| ConfigError {
                        message: format!("`{key}` must be a comma-separated number list"),
                        line: None,
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = Config::parse("# header\n beta = 0.5 # inline\n\n t_ladder = 1, 2, 4\n").unwrap();
        assert_eq!(cfg.f64("beta", 0.0).unwrap(), 0.5);
        assert_eq!(cfg.f64_list("t_ladder", &[]).unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(cfg.f64("missing", 7.0).unwrap(), 7.0);
    }

    #[test]
    fn reports_line_numbers() {
        let err = Config::parse("ok = 1\nbroken line\n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn rejects_bad_numbers() {
        let cfg = Config::parse("x = abc\n").unwrap();
        assert!(cfg.f64("x", 0.0).is_err());
    }
}
