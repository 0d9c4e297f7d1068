//! `key = value` files. Blank lines and `#` comments are skipped; relative
//! paths resolve against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{config, CliResult};

#[derive(Clone, Debug)]
pub struct KeyValues {
    base: PathBuf,
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: PathBuf) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            let key = k.trim().to_owned();
            if entries.insert(key.clone(), v.trim().to_owned()).is_some() {
                return Err(config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(Self { base, entries })
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> CliResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config(format!("override {assignment:?} is not key=value")))?;
        self.entries.insert(k.trim().to_owned(), v.trim().to_owned());
        Ok(())
    }

    pub fn reject_unknown(&self, known: &[&str]) -> CliResult<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn required(&self, key: &str) -> CliResult<&str> {
        self.get(key).ok_or_else(|| config(format!("missing key {key:?}")))
    }

    pub fn resolve(&self, value: &str) -> PathBuf {
        self.base.join(value)
    }

    /// A path that must name an existing file.
    pub fn input_path(&self, key: &str) -> CliResult<PathBuf> {
        let path = self.resolve(self.required(key)?);
        if !path.is_file() {
            return Err(config(format!("{key}: file {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn number<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn flag(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(config(format!("{key}: expected true or false, got {v:?}"))),
        }
    }
}

pub fn parse_list(text: &str) -> Vec<String> {
    text.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect()
}
