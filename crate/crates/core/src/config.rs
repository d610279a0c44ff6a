//! Line-based run configuration: `key = value` pairs, `#` comments and
//! `[section]` headers. A key `k` under `[s]` is addressed as `s.k`.
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required config key `{0}`")]
    Missing(String),
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

/// Every key the commands understand.
pub const KNOWN_KEYS: &[&str] = &[
    "network.input",
    "network.layers",
    "network.init_scale",
    "network.init_seed",
    "data.kind",
    "data.train",
    "data.test",
    "data.outputs",
    "data.header",
    "data.count",
    "data.height",
    "data.width",
    "data.seed",
    "data.train_count",
    "data.split_seed",
    "train.mode",
    "train.step_size",
    "train.iterations",
    "train.batch_size",
    "train.seed",
    "train.eval_period",
    "train.momentum",
    "train.weight_decay",
    "train.decision_samples",
    "train.bound_samples",
    "train.metric",
    "output.dir",
    "eval.checkpoint",
    "eval.decision",
    "eval.samples",
    "eval.seed",
    "oracle.seed",
    "oracle.nets",
    "oracle.mc_samples",
    "oracle.burn_in",
    "oracle.sweeps",
    "oracle.jensen_nets",
    "segment.checkpoint",
    "segment.image",
    "segment.mask",
    "segment.images",
    "segment.scribble",
    "segment.decision",
    "segment.samples",
    "segment.seed",
    "segment.burn_in",
    "segment.sweeps",
    "segment.thinning",
    "segment.noise",
    "segment.blur",
    "segment.out",
    "serve.checkpoint",
    "serve.addr",
    "serve.burn_in",
    "serve.sweeps",
    "serve.thinning",
    "serve.preview_samples",
    "serve.seed",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| ConfigError::Syntax {
                line: i + 1,
                message: message.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                section = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header"))?
                    .trim()
                    .to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(syntax("empty key"));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(syntax(&format!("duplicate key `{key}`")));
            }
        }
        let cfg = Self {
            values,
            base: base.to_path_buf(),
        };
        cfg.check_keys()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn check_keys(&self) -> Result<(), ConfigError> {
        match self.values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            Some(k) => Err(ConfigError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }

    /// Applies a `--set key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Invalid {
            key: assignment.to_string(),
            message: "override must look like key=value".into(),
        })?;
        let k = k.trim();
        if !KNOWN_KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        self.values.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Invalid {
                    key: key.to_string(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Comma-separated list; empty when the key is absent.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>().map_err(|e| ConfigError::Invalid {
                    key: key.to_string(),
                    message: format!("{s:?}: {e}"),
                })
            })
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| self.base.join(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.path(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn invalid(key: &str, message: impl std::fmt::Display) -> ConfigError {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "
# experiment
[train]
mode = bn      # stochastic learner
step_size = 0.5
[segment]
noise = 0, 0.1,0.2
image = img/a.ppm
";

    #[test]
    fn sections_and_comments() {
        let c = RunConfig::parse(TEXT, Path::new("/exp")).unwrap();
        assert_eq!(c.raw("train.mode"), Some("bn"));
        assert_eq!(c.get::<f64>("train.step_size").unwrap(), Some(0.5));
        assert_eq!(c.list::<f64>("segment.noise").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(c.path("segment.image").unwrap(), PathBuf::from("/exp/img/a.ppm"));
        assert_eq!(c.get_or("train.iterations", 7usize).unwrap(), 7);
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::parse(TEXT, Path::new(".")).unwrap();
        c.set("train.step_size=0.25").unwrap();
        assert_eq!(c.get::<f64>("train.step_size").unwrap(), Some(0.25));
        assert!(matches!(c.set("train.bogus=1"), Err(ConfigError::UnknownKey(k)) if k == "train.bogus"));
        assert!(c.set("novalue").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let err = RunConfig::parse("[train]\nstepsize = 1\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("train.stepsize"));
        assert!(matches!(RunConfig::parse("[train\n", Path::new(".")), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("just words\n", Path::new(".")), Err(ConfigError::Syntax { .. })));
        assert!(RunConfig::parse("[train]\nseed=1\nseed=2\n", Path::new(".")).is_err());
        let c = RunConfig::parse("[train]\nstep_size = fast\n", Path::new(".")).unwrap();
        assert!(matches!(c.get::<f64>("train.step_size"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(c.require::<u64>("train.seed"), Err(ConfigError::Missing(_))));
    }
}
