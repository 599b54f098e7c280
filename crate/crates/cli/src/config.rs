//! Plain-text configuration: `key=value` lines with `#` comments. Values
//! resolve as CLI flag > config file > environment > built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Environment variable providing the default output directory.
pub const OUT_DIR_ENV: &str = "WELLCAP_OUT_DIR";

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// CLI value wins; otherwise fall back to the parsed config entry, then
    /// the default.
    pub fn resolve<T>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("config key {key}={raw:?}: {e}")),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}={raw:?}: {e}")),
            None => Ok(None),
        }
    }

    /// Output directory: flag, then config, then `WELLCAP_OUT_DIR`, then cwd.
    pub fn resolve_out_dir(&self, cli: Option<PathBuf>) -> PathBuf {
        if let Some(dir) = cli {
            return dir;
        }
        if let Some(dir) = self.values.get("out_dir") {
            return PathBuf::from(dir);
        }
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from(".")
    }
}
