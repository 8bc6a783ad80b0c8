//! Config files and flag merging.
//!
//! A config file holds `key = value` lines; `#` starts a comment line. Keys
//! are the long flag names with `-` replaced by `_`. Flags given on the
//! command line override the file. Unknown keys are an error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Errors that should exit with status 2: bad usage or missing inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Fails with a usage error when `path` does not exist.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} `{}` not found", path.display())));
    }
    Ok(())
}

/// Ordered key/value settings for one subcommand.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    allowed: Vec<&'static str>,
}

impl Settings {
    pub fn new(allowed: Vec<&'static str>) -> Self {
        Settings {
            values: BTreeMap::new(),
            allowed,
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        require_file(path, "config file")?;
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    i + 1
                ))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !self.allowed.contains(&key) {
            return Err(usage(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| usage(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let mut s = Settings::new(vec!["lr"]);
        assert!(s.set("lr", 0.1).is_ok());
        assert!(s
            .set("nope", 1)
            .unwrap_err()
            .downcast_ref::<UsageError>()
            .is_some());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "# c\nlr = 0.5\nepochs=3\n").unwrap();
        let mut s = Settings::new(vec!["lr", "epochs"]);
        s.load_file(&p).unwrap();
        s.set_opt("lr", Some(0.25)).unwrap();
        assert_eq!(s.get("lr"), Some("0.25"));
        assert_eq!(s.parse::<usize>("epochs").unwrap(), Some(3));
        assert_eq!(s.to_text(), "epochs = 3\nlr = 0.25\n");
    }
}
