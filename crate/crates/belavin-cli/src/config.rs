//! Flat key=value configuration files with dotted keys, e.g.
//!
//! ```text
//! n = 2
//! r = 4
//! x = 0.3
//! correlation.m = 256
//! ```
//!
//! Lines starting with '#' are comments. Unknown keys are kept (callers ask
//! for what they need); malformed lines are rejected with the offending key.

use std::collections::BTreeMap;
use std::path::Path;

use belavin::Error;

#[derive(Default, Debug)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
}

pub fn load(path: Option<&Path>) -> Result<FlatConfig, Error> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => match std::env::var_os("BELAVIN_CONFIG") {
            Some(p) => p.into(),
            None => return Ok(FlatConfig::default()),
        },
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<FlatConfig, Error> {
    let mut values = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {} has no '=': '{line}'", lineno + 1)))?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Config(format!("config line {}: bad key '{key}'", lineno + 1)));
        }
        values.insert(key.to_string(), value.trim().to_string());
    }
    Ok(FlatConfig { values })
}

impl FlatConfig {
    pub fn get_str(&self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }

    pub fn get_u32(&self, key: &str) -> Result<Option<u32>, Error> {
        self.parse_num(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, Error> {
        self.parse_num(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, Error> {
        self.parse_num(key)
    }

    pub fn get_i64(&self, key: &str) -> Result<Option<i64>, Error> {
        self.parse_num(key)
    }

    fn parse_num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("config key '{key}': bad value '{v}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let cfg = parse("# comment\nn = 2\ncorrelation.m = 256\nx = 0.3\n").unwrap();
        assert_eq!(cfg.get_usize("n").unwrap(), Some(2));
        assert_eq!(cfg.get_usize("correlation.m").unwrap(), Some(256));
        assert_eq!(cfg.get_str("x").unwrap(), "0.3");
        assert_eq!(cfg.get_usize("missing").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse("just words\n").is_err());
        let cfg = parse("n = notanumber\n").unwrap();
        assert!(cfg.get_usize("n").is_err());
    }
}
