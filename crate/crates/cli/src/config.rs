//! Flat `section.key = value` configuration with flag overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{origin}:{}: expected `key = value`", i + 1);
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                bail!("{origin}:{}: empty key", i + 1);
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                bail!("{origin}:{}: duplicate key {k}", i + 1);
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }
}

/// Resolves each setting as flag, else config file, else default, and keeps
/// a record of what was used.
#[derive(Debug)]
pub struct Resolver {
    file: ConfigFile,
    used: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: ConfigFile) -> Self {
        Resolver {
            file,
            used: BTreeMap::new(),
        }
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}: cannot parse {v:?}: {e}")),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.used.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Like [`get`](Self::get) without a default; absent keys stay absent.
    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.get_opt(key, flag)?
            .with_context(|| format!("missing setting {key} (flag or config file)"))
    }

    /// Warns about config keys that no setting consumed.
    pub fn finish(&self) -> String {
        for k in self.file.values.keys() {
            if !self.used.contains_key(k) {
                log::warn!("config key {k} is not used by this command");
            }
        }
        self.used.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Comma-separated list wrapper usable with [`Resolver`].
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = T::Err;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<Vec<T>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let f = ConfigFile::parse("segment.k = 12\nsegment.chains = 3 # note\n", "t").unwrap();
        let mut r = Resolver::new(f);
        assert_eq!(r.get("segment.k", Some(7usize), 1).unwrap(), 7);
        assert_eq!(r.get("segment.chains", None, 5usize).unwrap(), 3);
        assert_eq!(r.get("segment.seed", None, 9u64).unwrap(), 9);
        assert_eq!(r.finish(), "segment.chains = 3\nsegment.k = 7\nsegment.seed = 9\n");
    }

    #[test]
    fn malformed_lines() {
        assert!(ConfigFile::parse("novalue\n", "t").is_err());
        assert!(ConfigFile::parse("a = 1\na = 2\n", "t").is_err());
        let mut r = Resolver::new(ConfigFile::parse("a = x\n", "t").unwrap());
        assert!(r.get("a", None, 1usize).is_err());
    }

    #[test]
    fn lists() {
        let l: List<usize> = "100, 100,13".parse().unwrap();
        assert_eq!(l.0, vec![100, 100, 13]);
        assert_eq!(l.to_string(), "100,100,13");
    }
}
