//! Flat `key = value` run configuration.
//!
//! ```text
//! # model
//! dynamics.a = 0
//! dynamics.b = 1
//! dynamics.c = 0
//! dynamics.d = 0
//! reward.m = 1
//! reward.n = 1
//! reward.r = 0
//! reward.p = 0
//! reward.q = 0
//! discount.rho = 1
//! explore.lambda = 0.2
//! # optional
//! sim.dt = 0.001
//! sweep.lambdas = 0.2, 0.02, 0.002
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are errors.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::LqModel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("missing required key {0}")]
    Missing(String),
    #[error("unknown key {key} (line {line})")]
    Unknown { key: String, line: usize },
    #[error("key {key} given twice (line {line})")]
    Duplicate { key: String, line: usize },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("key {key}: cannot parse {value:?} ({reason})")]
    Value { key: String, value: String, reason: String },
}

/// Keys that must be present, in model order.
pub const MODEL_KEYS: [&str; 11] = [
    "dynamics.a",
    "dynamics.b",
    "dynamics.c",
    "dynamics.d",
    "reward.m",
    "reward.n",
    "reward.r",
    "reward.p",
    "reward.q",
    "discount.rho",
    "explore.lambda",
];

/// Optional keys with their defaults.
pub const OPTIONAL_KEYS: [(&str, &str); 16] = [
    ("sim.x0", "1"),
    ("sim.dt", "0.001"),
    ("sim.n_steps", "10000"),
    ("sim.n_paths", "10000"),
    ("sim.seed", ""),
    ("sim.parallelism", "1"),
    ("sim.stride", "100"),
    ("sweep.lambdas", "0.1, 0.01, 0.001, 0.0001, 0.00001, 0.000001"),
    ("sweep.probe_x", "1"),
    ("residual.x_min", "-10"),
    ("residual.x_max", "10"),
    ("residual.points", "41"),
    ("exact.dts", "0.01, 0.001, 0.0001"),
    ("exact.ref_factor", "4"),
    ("exact.horizon", "1"),
    ("output.format", "csv"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub x0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: Option<u64>,
    pub parallelism: usize,
    /// Node stride for trajectory export.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub probe_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl ResidualConfig {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.x_min];
        }
        let h = (self.x_max - self.x_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.x_min + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactConfig {
    pub dts: Vec<f64>,
    pub ref_factor: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: LqModel,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    pub residual: ResidualConfig,
    pub exact: ExactConfig,
    pub format: OutputFormat,
}

fn raw_entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let known: Vec<&str> = MODEL_KEYS.iter().copied().chain(OPTIONAL_KEYS.iter().map(|(k, _)| *k)).collect();
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !known.contains(&key) {
            return Err(ConfigError::Unknown { key: key.to_string(), line });
        }
        if out.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(ConfigError::Duplicate { key: key.to_string(), line });
        }
    }
    Ok(out)
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn text(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }

    fn or_default(&self, key: &str) -> String {
        match self.text(key) {
            Some(v) => v.to_string(),
            None => OPTIONAL_KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string()).unwrap_or_default(),
        }
    }

    fn required_f64(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.text(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        parse_f64(key, v)
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        parse_f64(key, &self.or_default(key))
    }

    fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.or_default(key);
        v.parse().map_err(|e: std::num::ParseIntError| bad(key, &v, &e.to_string()))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.or_default(key);
        v.split(',').map(|s| parse_f64(key, s.trim())).collect()
    }
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Value { key: key.to_string(), value: value.to_string(), reason: reason.to_string() }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = value.parse().map_err(|e: std::num::ParseFloatError| bad(key, value, &e.to_string()))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, value, "not finite"))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let e = Entries(raw_entries(text)?);
        let v: Vec<f64> = MODEL_KEYS.iter().map(|k| e.required_f64(k)).collect::<Result<_, _>>()?;
        let model = LqModel {
            a: v[0],
            b: v[1],
            c: v[2],
            d: v[3],
            m: v[4],
            n: v[5],
            r: v[6],
            p: v[7],
            q: v[8],
            rho: v[9],
            lambda: v[10],
        };

        let seed = match e.text("sim.seed") {
            None => None,
            Some(s) => Some(s.parse().map_err(|err: std::num::ParseIntError| bad("sim.seed", s, &err.to_string()))?),
        };
        let sim = SimConfig {
            x0: e.f64("sim.x0")?,
            dt: e.f64("sim.dt")?,
            n_steps: e.usize("sim.n_steps")?,
            n_paths: e.usize("sim.n_paths")?,
            seed,
            parallelism: e.usize("sim.parallelism")?.max(1),
            stride: e.usize("sim.stride")?.max(1),
        };
        if !(sim.dt > 0.0) {
            return Err(bad("sim.dt", &e.or_default("sim.dt"), "must be positive"));
        }
        if sim.n_steps == 0 {
            return Err(bad("sim.n_steps", "0", "must be at least 1"));
        }
        if sim.n_paths == 0 {
            return Err(bad("sim.n_paths", "0", "must be at least 1"));
        }

        let sweep = SweepConfig { lambdas: e.list("sweep.lambdas")?, probe_x: e.f64("sweep.probe_x")? };
        if let Some(l) = sweep.lambdas.iter().find(|l| !(**l > 0.0)) {
            return Err(bad("sweep.lambdas", &l.to_string(), "temperatures must be positive"));
        }

        let residual = ResidualConfig {
            x_min: e.f64("residual.x_min")?,
            x_max: e.f64("residual.x_max")?,
            points: e.usize("residual.points")?,
        };
        if residual.points == 0 {
            return Err(bad("residual.points", "0", "must be at least 1"));
        }

        let exact = ExactConfig {
            dts: e.list("exact.dts")?,
            ref_factor: e.usize("exact.ref_factor")?.max(1),
            horizon: e.f64("exact.horizon")?,
        };
        if !(exact.horizon > 0.0) {
            return Err(bad("exact.horizon", &exact.horizon.to_string(), "must be positive"));
        }
        if let Some(dt) = exact.dts.iter().find(|d| !(**d > 0.0)) {
            return Err(bad("exact.dts", &dt.to_string(), "step sizes must be positive"));
        }

        let format = match e.or_default("output.format").as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(bad("output.format", other, "expected csv or json")),
        };

        Ok(Self { model, sim, sweep, residual, exact, format })
    }

    /// Serializes the model keys back to config text.
    pub fn model_text(model: &LqModel) -> String {
        let values =
            [model.a, model.b, model.c, model.d, model.m, model.n, model.r, model.p, model.q, model.rho, model.lambda];
        MODEL_KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::s1;

    #[test]
    fn round_trip_model() {
        let text = RunConfig::model_text(&s1());
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.model, s1());
        assert_eq!(cfg.sim.seed, None);
        assert_eq!(cfg.sim.x0, 1.0);
        assert_eq!(cfg.sweep.lambdas.len(), 6);
        assert_eq!(cfg.residual.grid().len(), 41);
        assert_eq!(cfg.residual.grid()[20], 0.0);
        assert_eq!(cfg.format, OutputFormat::Csv);
    }

    #[test]
    fn missing_key_is_named() {
        let text = RunConfig::model_text(&s1()).replace("reward.n = 1\n", "");
        let err = RunConfig::parse(&text).unwrap_err();
        assert_eq!(err, ConfigError::Missing("reward.n".into()));
        assert!(err.to_string().contains("reward.n"));
    }

    #[test]
    fn rejects_unknown_duplicate_and_garbage() {
        let base = RunConfig::model_text(&s1());
        assert!(matches!(RunConfig::parse(&format!("{base}sim.bogus = 1\n")), Err(ConfigError::Unknown { .. })));
        assert!(matches!(RunConfig::parse(&format!("{base}reward.m = 2\n")), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(RunConfig::parse(&format!("{base}oops\n")), Err(ConfigError::Syntax { line: 12 })));
        let err = RunConfig::parse(&base.replace("reward.q = 0", "reward.q = zero")).unwrap_err();
        assert!(err.to_string().contains("reward.q"));
        assert!(RunConfig::parse(&format!("{base}sim.dt = 0\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}sweep.lambdas = 0.1, -1\n")).is_err());
    }

    #[test]
    fn optional_sections() {
        let text = format!(
            "# comment\n\n{}sim.seed = 42\nsweep.lambdas = 0.2,0.02 , 0.002\nsim.parallelism = 4\noutput.format = json\n",
            RunConfig::model_text(&s1())
        );
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.sim.seed, Some(42));
        assert_eq!(cfg.sweep.lambdas, vec![0.2, 0.02, 0.002]);
        assert_eq!(cfg.sim.parallelism, 4);
        assert_eq!(cfg.format, OutputFormat::Json);
    }
}
