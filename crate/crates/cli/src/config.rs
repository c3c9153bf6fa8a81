//! Line-based `key = value` config files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are the long flag
//! names without the leading dashes (`crop-size = 256x256`). A flag given on
//! the command line wins over the file, and the file wins over built-in
//! defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "n",
    "seed",
    "out",
    "tilt-range",
    "faulty-fraction",
    "image-size",
    "clutter",
    "manifest",
    "backend",
    "coarse-backend",
    "fine-backend",
    "threshold",
    "crop-size",
    "coarse-size",
    "workers",
    "masks",
    "overlay",
    "fail-on-skip",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, found `{line}`",
                    source.display(),
                    i + 1
                );
            };
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                bail!("{}:{}: unknown key `{k}`", source.display(), i + 1);
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                bail!("{}:{}: key `{k}` given twice", source.display(), i + 1);
            }
        }
        Ok(FileConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, path)
    }

    /// Flag value if present, else the parsed file value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")),
        }
    }

    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Boolean switch: set by the flag, or by `true`/`false` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

/// `W x H` size; a single number means a square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size(pub usize, pub usize);

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |v: &str| -> std::result::Result<usize, String> {
            match v.trim().parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("`{s}` is not a positive size")),
                Ok(n) => Ok(n),
            }
        };
        match s.split_once(['x', 'X']) {
            Some((w, h)) => Ok(Size(parse(w)?, parse(h)?)),
            None => {
                let n = parse(s)?;
                Ok(Size(n, n))
            }
        }
    }
}

impl std::fmt::Display for Size {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

/// Inclusive `lo,hi` range of floats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range(pub f64, pub f64);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("`{s}` should look like `lo,hi`"))?;
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{v}` is not a number"))
        };
        Ok(Range(num(a)?, num(b)?))
    }
}
