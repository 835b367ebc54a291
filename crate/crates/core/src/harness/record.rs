//! Result records: one JSON object per line plus a long-format CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::bodies::BodySpec;

/// A real number that serializes non-finite values as strings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Str(s) => match s.as_str() {
                "NaN" => Ok(Real(f64::NAN)),
                "inf" => Ok(Real(f64::INFINITY)),
                "-inf" => Ok(Real(f64::NEG_INFINITY)),
                _ => Err(serde::de::Error::custom(format!("invalid real {s:?}"))),
            },
        }
    }
}

/// How far a measured value can be trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Uncertainty {
    StandardError { se: Real },
    Interval { low: Real, high: Real },
    /// Best value found by a local search; a bound in the stated direction.
    Bound { direction: String },
    /// Solver quantity reported to a tolerance.
    Tolerance { tol: Real },
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantity {
    pub name: String,
    pub value: Real,
    pub uncertainty: Uncertainty,
}

impl Quantity {
    pub fn se(name: impl Into<String>, value: f64, se: f64) -> Self {
        Self {
            name: name.into(),
            value: Real(value),
            uncertainty: Uncertainty::StandardError { se: Real(se) },
        }
    }

    pub fn interval(name: impl Into<String>, value: f64, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            value: Real(value),
            uncertainty: Uncertainty::Interval {
                low: Real(low),
                high: Real(high),
            },
        }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value: Real(value),
            uncertainty: Uncertainty::Exact,
        }
    }

    pub fn tolerance(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value: Real(value),
            uncertainty: Uncertainty::Tolerance { tol: Real(tol) },
        }
    }

    pub fn lower_bound(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value: Real(value),
            uncertainty: Uncertainty::Bound {
                direction: "lower".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySpec>,
    pub parameters: BTreeMap<String, Value>,
    pub measured: Vec<Quantity>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub artifacts: BTreeMap<String, Value>,
    pub passed: bool,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

impl ExperimentRecord {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            body_name: None,
            body: None,
            parameters: BTreeMap::new(),
            measured: Vec::new(),
            artifacts: BTreeMap::new(),
            passed: true,
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp_unix: None,
        }
    }

    pub fn with_body(mut self, name: &str, spec: BodySpec) -> Self {
        self.body_name = Some(name.into());
        self.body = Some(spec);
        self
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn push(&mut self, q: Quantity) {
        self.measured.push(q);
    }

    pub fn artifact(&mut self, key: &str, value: impl Serialize) {
        self.artifacts
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.measured.iter().find(|q| q.name == name).map(|q| q.value.0)
    }
}

pub fn to_jsonl(records: &[ExperimentRecord]) -> serde_json::Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl(text: &str) -> serde_json::Result<Vec<ExperimentRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

fn real_text(v: f64) -> String {
    match serde_json::to_value(Real(v)) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn param_text(r: &ExperimentRecord, key: &str) -> String {
    match r.parameters.get(key) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(v) => v.to_string(),
    }
}

/// One row per measured quantity.
pub fn to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("experiment,record,body,n,k,alpha,quantity,value,kind,se,low,high,passed\n");
    for (i, r) in records.iter().enumerate() {
        for q in &r.measured {
            let (kind, se, low, high) = match &q.uncertainty {
                Uncertainty::StandardError { se } => ("se", real_text(se.0), String::new(), String::new()),
                Uncertainty::Interval { low, high } => ("interval", String::new(), real_text(low.0), real_text(high.0)),
                Uncertainty::Bound { direction } => (
                    if direction == "lower" { "lower_bound" } else { "upper_bound" },
                    String::new(),
                    String::new(),
                    String::new(),
                ),
                Uncertainty::Tolerance { tol } => ("tolerance", real_text(tol.0), String::new(), String::new()),
                Uncertainty::Exact => ("exact", String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.experiment,
                i,
                r.body_name.as_deref().unwrap_or(""),
                param_text(r, "n"),
                param_text(r, "k"),
                param_text(r, "alpha"),
                q.name,
                real_text(q.value.0),
                kind,
                se,
                low,
                high,
                r.passed
            );
        }
    }
    out
}

/// Writes `<name>.jsonl` and `<name>.csv` into `dir`.
pub fn write_outputs(dir: &Path, name: &str, records: &[ExperimentRecord]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let jsonl = to_jsonl(records).map_err(io::Error::other)?;
    let mut f = std::fs::File::create(dir.join(format!("{name}.jsonl")))?;
    f.write_all(jsonl.as_bytes())?;
    let mut f = std::fs::File::create(dir.join(format!("{name}.csv")))?;
    f.write_all(to_csv(records).as_bytes())?;
    Ok(())
}

/// Wilson score interval for `successes` out of `trials` at `z` standard
/// deviations.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}
