//! Experiment configuration: one strict TOML table, flags layered on top.

use std::path::{Path, PathBuf};

use kpzlab::winding::Boundary;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every subcommand the harness can run, by its record name.
pub const COMMANDS: &[&str] = &[
    "she-solve",
    "mixing",
    "gamma-closed",
    "gamma-bridge",
    "gamma-simulate",
    "gamma-expand",
    "sigma2-mc",
    "sigma2-decay",
    "sigma2-corrector",
    "clt-height",
    "clt-winding",
    "winding-sample",
    "winding-quenched",
    "winding-sigma",
    "corrector-chi",
    "corrector-grad",
    "yor",
    "lil",
];

/// Full parameter set of one run. Fields a subcommand does not read are
/// carried along unchanged so a persisted config replays any run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Subcommand, e.g. `gamma-closed`.
    pub command: String,
    pub seed: u64,
    /// Worker threads; 0 defers to `KPZLAB_THREADS`, then to the core count.
    pub threads: usize,
    pub out_dir: PathBuf,

    pub beta: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub n: usize,
    pub dt: f64,
    /// Final time of simulations (`t` of the CLT, winding and LIL runs).
    pub horizon: f64,
    /// JSON covariance table; absent means white noise.
    pub covariance: Option<PathBuf>,

    pub replicas: usize,
    /// Outer Monte-Carlo sample count.
    pub samples: usize,
    /// Inner sample count of nested estimators.
    pub inner: usize,
    /// Bridge grid; 0 picks it from `λ = β√L`.
    pub grid: usize,

    /// Grid ladder of `gamma-simulate`; 1 runs a single grid.
    pub levels: usize,
    pub order: usize,
    /// Snapshot / observation times; empty means the command's default.
    pub times: Vec<f64>,
    /// Torus lengths of `sigma2-decay`.
    pub lengths: Vec<f64>,
    /// `λ` values of `yor`.
    pub lambdas: Vec<f64>,

    pub envs: usize,
    pub paths: usize,
    pub lag_max: usize,
    pub boundary: Vec<Boundary>,
    /// Winding runs also compute the exact quenched law.
    pub quenched: bool,

    /// Centering and variance for the CLT and LIL; absent values are computed.
    pub gamma: Option<f64>,
    pub sigma2: Option<f64>,
    /// `uniform` or `stationary`.
    pub rho: String,

    pub d: usize,
    /// Shell cut of `gamma-expand`; 0 uses the whole table.
    pub n_max: usize,

    pub sample_every: f64,
    pub fit_from: f64,
    /// `she-solve` also writes the binary snapshot format.
    pub binary: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 1,
            threads: 0,
            out_dir: PathBuf::from("results"),
            beta: 1.0,
            length: 1.0,
            n: 128,
            dt: 1e-3,
            horizon: 10.0,
            covariance: None,
            replicas: 100,
            samples: 100_000,
            inner: 16,
            grid: 0,
            levels: 1,
            order: 0,
            times: Vec::new(),
            lengths: vec![1.0, 4.0, 16.0, 64.0],
            lambdas: vec![0.5, 1.0, 2.0],
            envs: 20,
            paths: 100,
            lag_max: 10,
            boundary: vec![Boundary::LebesgueDelta],
            quenched: true,
            gamma: None,
            sigma2: None,
            rho: "uniform".to_string(),
            d: 1,
            n_max: 0,
            sample_every: 0.1,
            fit_from: 1.0,
            binary: false,
        }
    }
}

fn constraint(field: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Constraint {
        field,
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    /// Range checks that do not need the numerical modules.
    pub fn validate(&self) -> Result<(), CliError> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(constraint(
                "command",
                format!("unknown command `{}`", self.command),
            ));
        }
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(constraint(field, format!("must be positive, got {v}")))
            }
        };
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(constraint(
                "beta",
                format!("must be >= 0, got {}", self.beta),
            ));
        }
        positive("L", self.length)?;
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        positive("sample_every", self.sample_every)?;
        if self.n < 4 {
            return Err(constraint(
                "n",
                format!("need at least 4 cells, got {}", self.n),
            ));
        }
        if self.samples < 2 {
            return Err(constraint("samples", "need at least 2"));
        }
        if self.replicas == 0 {
            return Err(constraint("replicas", "need at least 1"));
        }
        if self.levels == 0 || self.order >= self.levels {
            return Err(constraint(
                "order",
                format!(
                    "need order < levels, got order {} with {} levels",
                    self.order, self.levels
                ),
            ));
        }
        if self.d == 0 {
            return Err(constraint("d", "dimension must be >= 1"));
        }
        if self.envs == 0 {
            return Err(constraint("envs", "need at least 1 environment"));
        }
        if self.boundary.is_empty() {
            return Err(constraint("boundary", "need at least one boundary kind"));
        }
        if !matches!(self.rho.as_str(), "uniform" | "stationary") {
            return Err(constraint(
                "rho",
                format!("expected `uniform` or `stationary`, got `{}`", self.rho),
            ));
        }
        if let Some(t) = self.times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(constraint(
                "times",
                format!("negative or non-finite time {t}"),
            ));
        }
        if let Some(l) = self
            .lengths
            .iter()
            .chain(&self.lambdas)
            .find(|l| !(**l > 0.0))
        {
            return Err(constraint("lengths", format!("nonpositive entry {l}")));
        }
        if let Some(s) = self.sigma2 {
            positive("sigma2", s)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable short hash of the serialized config, used in file names.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{:08x}", h >> 32)
    }

    /// Base name shared by every file of this run.
    pub fn stem(&self) -> String {
        format!("{}-{}", self.command, self.fingerprint())
    }
}

fn known_keys() -> Vec<String> {
    let value = toml::Value::try_from(ExperimentConfig::default()).expect("config serializes");
    let mut keys: Vec<String> = value
        .as_table()
        .expect("config is a table")
        .keys()
        .cloned()
        .collect();
    keys.extend(["covariance", "gamma", "sigma2"].map(String::from));
    keys
}

/// Parses TOML text, layers `overrides` on top, fills defaults and validates.
pub fn parse_config_str(text: &str, overrides: toml::Table) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Syntax(e.message().to_string()))?;
    table.extend(overrides);
    let known = known_keys();
    if let Some(k) = table.keys().find(|k| !known.contains(k)) {
        return Err(CliError::UnknownKey(k.clone()));
    }
    let config: ExperimentConfig = table.clone().try_into().map_err(|e: toml::de::Error| {
        // Re-parse key by key to name the offending one.
        let key = table
            .iter()
            .find(|(k, v)| {
                let single: toml::Table = [((*k).clone(), (*v).clone())].into_iter().collect();
                single.try_into::<ExperimentConfig>().is_err()
            })
            .map(|(k, _)| k.clone())
            .unwrap_or_default();
        CliError::TypeMismatch {
            key,
            reason: e.message().trim().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads `path` (if any) and applies `overrides`.
pub fn parse_config(
    path: Option<&Path>,
    overrides: toml::Table,
) -> Result<ExperimentConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::ConfigIo {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}

/// Parses `key=value` with the value read as a TOML literal, falling back to a string.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value), CliError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Syntax(format!("`{s}` is not key=value")))?;
    let key = key.trim().to_string();
    let parsed: Result<toml::Table, _> = toml::from_str(&format!("v = {}", value.trim()));
    let value = match parsed {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.trim().to_string()),
    };
    Ok((key, value))
}
