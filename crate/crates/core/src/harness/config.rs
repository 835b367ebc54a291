//! Experiment configuration: one JSON document naming bodies, the
//! experiment and its parameters.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bodies::BodySpec;
use crate::harness::zoo::zoo_spec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    /// Stamp records with the wall-clock time; off by default so that
    /// reruns are byte-identical.
    pub timestamps: bool,
    pub bodies: BTreeMap<String, BodySpec>,
    pub parameters: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parameters of an experiment; absent fields take their defaults.
    pub fn parameters<T: DeserializeOwned + Default>(&self) -> Result<T, ConfigError> {
        match &self.parameters {
            Value::Null => Ok(T::default()),
            v => Ok(serde_json::from_value(v.clone())?),
        }
    }

    /// Bodies for `names` at the dimensions `dims`. Names defined in the
    /// config are used as given; zoo names are built once per dimension.
    pub fn resolve(&self, names: &[String], dims: &[usize]) -> Result<Vec<NamedBody>, ConfigError> {
        let mut out = Vec::new();
        for name in names {
            if let Some(spec) = self.bodies.get(name) {
                let dim = spec
                    .build()
                    .map_err(|e| ConfigError::Invalid(format!("body {name:?}: {e}")))?
                    .dim();
                out.push(NamedBody {
                    name: name.clone(),
                    dim,
                    spec: spec.clone(),
                });
                continue;
            }
            if zoo_spec(name, 1).is_none() {
                return Err(ConfigError::Invalid(format!("unknown body {name:?}")));
            }
            if dims.is_empty() {
                return Err(ConfigError::Invalid(format!("zoo body {name:?} needs dims")));
            }
            for &n in dims {
                if n == 0 {
                    return Err(ConfigError::Invalid("dimensions must be positive".into()));
                }
                out.push(NamedBody {
                    name: name.clone(),
                    dim: n,
                    spec: zoo_spec(name, n).expect("checked"),
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedBody {
    pub name: String,
    pub dim: usize,
    pub spec: BodySpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        samples: usize,
    }

    #[test]
    fn parses_and_resolves() {
        let cfg = Config::from_json(
            r#"{"experiment": "lowmstar", "seed": 3,
                "bodies": {"mine": {"family": "weighted_lp", "p": 1, "weights": [1, 2]}},
                "parameters": {"samples": 7}}"#,
        )
        .unwrap();
        assert_eq!(cfg.parameters::<Demo>().unwrap().samples, 7);
        let got = cfg.resolve(&["mine".into(), "l2".into()], &[3, 4]).unwrap();
        assert_eq!(got.iter().map(|b| b.dim).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert!(cfg.resolve(&["nope".into()], &[3]).is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(Config::from_json(r#"{"sed": 3}"#).is_err());
        let cfg = Config::from_json(r#"{"parameters": {"sample": 7}}"#).unwrap();
        assert!(cfg.parameters::<Demo>().is_err());
        assert_eq!(Config::default().parameters::<Demo>().unwrap().samples, 0);
    }
}
