//! Flag values merged over an optional `key = value` config file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use firenet::train::parse_key_values;

use crate::Failure;

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    /// Resolved values in lookup order, for the reproducibility echo.
    echo: Vec<(String, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let pairs = parse_key_values(&text).map_err(|e| Failure::usage(e.to_string()))?;
        Ok(Settings {
            file: pairs
                .into_iter()
                .map(|(k, v)| (k.replace('_', "-"), v))
                .collect(),
            echo: Vec::new(),
        })
    }

    /// Flag value, else config value, else `None`.
    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| Failure::usage(format!("config key `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.echo.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure>
    where
        T: FromStr + Display + Clone,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.echo.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
        let value = flag.or_else(|| self.file.get(key).map(PathBuf::from));
        if let Some(p) = &value {
            self.echo.push((key.to_string(), p.display().to_string()));
        }
        Ok(value)
    }

    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
        self.path(key, flag)?
            .ok_or_else(|| Failure::usage(format!("missing required option --{key}")))
    }

    /// Flags reproducing this run.
    pub fn echo(&self, command: &str) -> String {
        let flags: Vec<String> = self
            .echo
            .iter()
            .map(|(k, v)| format!("--{k} {v}"))
            .collect();
        format!("# firenet {command} {}", flags.join(" "))
    }
}
