//! Experiment configuration files.
//!
//! A config is TOML with four sections (`problem`, `optimizer`, `run`,
//! `sweep`) plus an optional `estimation` section read by
//! `estimation-scaling`. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub optimizer: OptimizerSection,
    pub run: RunSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub estimation: Option<EstimationSection>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// `saddle`, `counterexample`, `quadratic` or `logistic`.
    pub name: String,
    // counterexample
    pub c: Option<f64>,
    pub zeta: Option<f64>,
    // quadratic
    pub h_diag: Option<Vec<f64>>,
    pub h: Option<Vec<Vec<f64>>>,
    pub noise_diag: Option<Vec<f64>>,
    pub noise_cov: Option<Vec<Vec<f64>>>,
    // logistic
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub noise_sd: Option<f64>,
    pub data_seed: Option<u64>,
    pub batch: Option<usize>,
    pub data_path: Option<String>,
}

pub const PROBLEM_NAMES: [&str; 4] = ["saddle", "counterexample", "quadratic", "logistic"];

impl ProblemSection {
    /// Keys that are set but unused by the named problem.
    fn stray_keys(&self) -> Vec<&'static str> {
        let set: [(&'static str, bool, &[&str]); 12] = [
            ("c", self.c.is_some(), &["counterexample"]),
            ("zeta", self.zeta.is_some(), &["counterexample"]),
            ("h_diag", self.h_diag.is_some(), &["quadratic"]),
            ("h", self.h.is_some(), &["quadratic"]),
            ("noise_diag", self.noise_diag.is_some(), &["quadratic"]),
            ("noise_cov", self.noise_cov.is_some(), &["quadratic"]),
            ("n", self.n.is_some(), &["logistic"]),
            ("d", self.d.is_some(), &["logistic"]),
            ("noise_sd", self.noise_sd.is_some(), &["logistic"]),
            ("data_seed", self.data_seed.is_some(), &["logistic"]),
            ("batch", self.batch.is_some(), &["logistic"]),
            ("data_path", self.data_path.is_some(), &["logistic"]),
        ];
        set.iter()
            .filter(|(_, present, owners)| *present && !owners.contains(&self.name.as_str()))
            .map(|(k, _, _)| *k)
            .collect()
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// `sgd`, `preconditioned_sgd`, `rmsprop`, `rmsprop_burnin` or `large_step`.
    pub algorithm: String,
    /// `identity`, `full`, `diagonal` or `covariance`.
    pub preconditioner: Option<String>,
    /// `estimated` or `idealized` (for `preconditioned_sgd` and `large_step`).
    pub source: Option<String>,
    /// −0.5 (RMSProp) or −1.
    pub exponent: Option<f64>,
    pub eta: Option<f64>,
    pub r: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub t_thresh: Option<usize>,
    /// Burn-in length W.
    pub burn_in: Option<usize>,
    /// Hallucination divisor S.
    pub hallucination: Option<usize>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub omega: Option<f64>,
    pub k_const: Option<f64>,
    /// `fixed` or `schedule`.
    pub beta_mode: Option<String>,
    /// C in `β_t = 1 − C η_t^{2/3}`.
    pub beta_c: Option<f64>,
    /// `constant` or `inv_sqrt`.
    pub step_schedule: Option<String>,
    pub bias_correction: Option<bool>,
    /// `first_order`, `first_order_inexact` or `second_order`.
    pub auto: Option<String>,
    /// `f(x₀) − f*`, needed by `auto = "first_order*"`.
    pub f_gap: Option<f64>,
    /// Step bound M for `auto = "second_order"`; estimated at `x₀` when absent.
    pub m_bound: Option<f64>,
}

pub const ALGORITHM_NAMES: [&str; 5] =
    ["sgd", "preconditioned_sgd", "rmsprop", "rmsprop_burnin", "large_step"];

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub name: Option<String>,
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for `seeds = 0..n_seeds`.
    pub n_seeds: Option<u64>,
    pub iterations: Option<usize>,
    pub x0: Option<Vec<f64>>,
    pub log_every: Option<usize>,
    pub hessian_every: Option<usize>,
    pub track_estimation_error: Option<bool>,
    pub escape_level: Option<f64>,
    pub f_threshold: Option<f64>,
    pub output: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted key, e.g. `optimizer.eta`.
    pub name: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub etas: Vec<f64>,
    #[serde(default = "one")]
    pub c: f64,
    /// Burn-in `W = ⌈burn_in_c · η^{−2/3}⌉`; defaults to `10 / c`, ten EMA
    /// time constants.
    #[serde(default)]
    pub burn_in_c: Option<f64>,
    /// Measured horizon `⌈horizon_factor / (1 − β)⌉`.
    #[serde(default = "twenty")]
    pub horizon_factor: f64,
    #[serde(default = "five_percent")]
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}
fn twenty() -> f64 {
    20.0
}
impl EstimationSection {
    pub fn burn_in_c(&self) -> f64 {
        self.burn_in_c.unwrap_or(10.0 / self.c)
    }
}

fn five_percent() -> f64 {
    0.05
}

pub const DEFAULT_ESCAPE_LEVEL: f64 = -0.005;

impl ExperimentConfig {
    pub fn name(&self) -> &str {
        self.run.name.as_deref().unwrap_or("run")
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.run.seeds, self.run.n_seeds) {
            (Some(s), _) => s.clone(),
            (None, Some(n)) => (0..n).collect(),
            (None, None) => vec![0],
        }
    }

    pub fn escape_level(&self) -> f64 {
        self.run.escape_level.unwrap_or(DEFAULT_ESCAPE_LEVEL)
    }

    pub fn log_every(&self) -> usize {
        self.run.log_every.unwrap_or(1)
    }

    /// Structural checks that do not need the problem to be built.
    pub fn validate(&self) -> CliResult<()> {
        if !PROBLEM_NAMES.contains(&self.problem.name.as_str()) {
            return Err(CliError::config(format!(
                "problem.name: unknown problem `{}` (expected one of {})",
                self.problem.name,
                PROBLEM_NAMES.join(", ")
            )));
        }
        if let Some(k) = self.problem.stray_keys().first() {
            return Err(CliError::config(format!(
                "problem.{k}: not a parameter of problem `{}`",
                self.problem.name
            )));
        }
        if !ALGORITHM_NAMES.contains(&self.optimizer.algorithm.as_str()) {
            return Err(CliError::config(format!(
                "optimizer.algorithm: unknown algorithm `{}` (expected one of {})",
                self.optimizer.algorithm,
                ALGORITHM_NAMES.join(", ")
            )));
        }
        if self.run.seeds.is_some() && self.run.n_seeds.is_some() {
            return Err(CliError::config("run.seeds and run.n_seeds are mutually exclusive"));
        }
        if self.seeds().is_empty() {
            return Err(CliError::config("run.seeds: at least one seed is required"));
        }
        // estimation-scaling supplies eta and the horizon itself
        let scaling_only = self.estimation.is_some() && self.run.iterations.is_none();
        if self.optimizer.auto.is_none() && !scaling_only {
            match self.run.iterations {
                None => return Err(CliError::config("run.iterations: missing")),
                Some(0) => return Err(CliError::config("run.iterations: must be at least 1")),
                _ => {}
            }
            if self.optimizer.eta.is_none() {
                return Err(CliError::config("optimizer.eta: missing (or set optimizer.auto)"));
            }
        } else if self.optimizer.auto.is_some() && self.optimizer.eta.is_some() {
            return Err(CliError::config("optimizer.eta: cannot be combined with optimizer.auto"));
        }
        if self.log_every() == 0 {
            return Err(CliError::config("run.log_every: must be at least 1"));
        }
        if let Some(est) = &self.estimation {
            if est.etas.iter().any(|e| !(*e > 0.0)) {
                return Err(CliError::config("estimation.etas: values must be positive"));
            }
            if !(est.c > 0.0) {
                return Err(CliError::config("estimation.c: must be positive"));
            }
        }
        Ok(())
    }
}

/// Parses a config file into a TOML table, without typing it.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> CliResult<Table> {
    text.parse::<Table>()
        .map_err(|e| CliError::config(format!("invalid TOML: {e}")))
}

pub fn from_table(table: Table) -> CliResult<ExperimentConfig> {
    let cfg: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
    from_table(read_table(path)?)
}

pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
    from_table(parse_table(text)?)
}

/// Sets `section.key = value` in a raw config table.
pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> CliResult<()> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| CliError::config(format!("sweep axis `{key}` must look like section.key")))?;
    if field.contains('.') || field.is_empty() {
        return Err(CliError::config(format!("sweep axis `{key}` must look like section.key")));
    }
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    let sect = entry
        .as_table_mut()
        .ok_or_else(|| CliError::config(format!("`{section}` is not a section")))?;
    // Keep floats floats: `1` for a float field would otherwise fail to type-check.
    let value = match (sect.get(field), value) {
        (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    sect.insert(field.to_string(), value);
    Ok(())
}

/// Reads a command-line value as a TOML scalar: integer, float, bool, or string.
pub fn parse_scalar(s: &str) -> Value {
    let t = s.trim();
    if let Ok(i) = t.parse::<i64>() {
        return Value::Integer(i);
    }
    if let Ok(f) = t.parse::<f64>() {
        return Value::Float(f);
    }
    match t {
        "true" => Value::Boolean(true),
        "false" => Value::Boolean(false),
        _ => Value::String(t.to_string()),
    }
}

/// Text used for a sweep value in run ids and summaries.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) => format!("{f:?}"),
        other => other.to_string(),
    }
}
