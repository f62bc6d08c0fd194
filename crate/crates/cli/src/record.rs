//! Result records: schema-versioned JSON written atomically, plus the
//! consolidated report over a result directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use kpzlab::stats::{combined_stderr, Estimate};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub git_describe: String,
    pub version: String,
}

impl Provenance {
    pub fn current() -> Self {
        Self {
            git_describe: env!("KPZLAB_GIT_DESCRIBE").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// One estimated quantity. Records sharing `quantity` are compared in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    /// Comparison key, e.g. `gamma(beta=1,L=1)`.
    pub quantity: String,
    /// `closed`, `bridge-mc`, `simulation`, …
    pub route: String,
    pub estimate: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub estimates: Vec<NamedEstimate>,
    pub checks: Vec<Check>,
    /// Paths of per-sample artifacts, relative to the record.
    pub artifacts: Vec<String>,
    pub details: serde_json::Value,
}

impl ResultRecord {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: config.command.clone(),
            config: config.clone(),
            provenance: Provenance::current(),
            estimates: Vec::new(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Adds an estimate; wall-clock time is dropped so reruns are bit-identical.
    pub fn estimate(&mut self, quantity: impl Into<String>, route: &str, estimate: Estimate) {
        self.estimates.push(NamedEstimate {
            quantity: quantity.into(),
            route: route.to_string(),
            estimate: Estimate {
                runtime_s: 0.0,
                ..estimate
            },
        });
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Quantity key with the model parameters that identify it.
pub fn quantity_key(name: &str, beta: f64, length: f64) -> String {
    format!("{name}(beta={beta},L={length})")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a partial file never carries the final name.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf).map_err(io_err(path))?;
        buf.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn record_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join(format!("{}.json", config.stem()))
}

/// Persists the record, its config and a timing sidecar. The record goes last.
pub fn persist(
    record: &ResultRecord,
    wall_clock_s: f64,
    threads: usize,
) -> Result<PathBuf, CliError> {
    let config = &record.config;
    let path = record_path(config);
    let config_path = config.out_dir.join(format!("{}.toml", config.stem()));
    write_atomic(&config_path, |w| w.write_all(config.to_toml().as_bytes()))?;
    let timing = serde_json::json!({ "wall_clock_s": wall_clock_s, "threads": threads });
    let timing_path = config
        .out_dir
        .join(format!("{}.timing.json", config.stem()));
    write_atomic(&timing_path, |w| {
        w.write_all(
            serde_json::to_string_pretty(&timing)
                .expect("json")
                .as_bytes(),
        )
    })?;
    let text = serde_json::to_string_pretty(record).expect("record serializes");
    write_atomic(&path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })?;
    Ok(path)
}

fn is_record(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".json") && !name.ends_with(".timing.json") && !name.starts_with('.')
}

/// Loads every record of `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<(PathBuf, ResultRecord)>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_record(p))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::BadRecord {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(CliError::SchemaMismatch {
                path,
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let record: ResultRecord =
            serde_json::from_value(value).map_err(|e| CliError::BadRecord {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        out.push((path, record));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    pub route: String,
    pub record: String,
    pub value: f64,
    pub stderr: f64,
    pub reference_route: String,
    /// `|value − reference| / combined stderr`; infinite when both are exact and differ.
    pub z: f64,
    /// Within 3 combined standard errors of the reference.
    pub agrees: bool,
}

/// Groups estimates by quantity. The reference of a group is its closed form
/// when one exists, otherwise the estimate with the smallest standard error.
pub fn build_report(records: &[(PathBuf, ResultRecord)]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<String, Vec<(String, &NamedEstimate)>> = BTreeMap::new();
    for (path, r) in records {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for e in &r.estimates {
            groups
                .entry(e.quantity.clone())
                .or_default()
                .push((name.clone(), e));
        }
    }
    let mut rows = Vec::new();
    for (quantity, members) in groups {
        let reference = members
            .iter()
            .find(|(_, e)| e.route == "closed")
            .or_else(|| {
                members
                    .iter()
                    .min_by(|a, b| a.1.estimate.stderr.total_cmp(&b.1.estimate.stderr))
            })
            .expect("group is nonempty");
        let (ref_value, ref_err, ref_route) = (
            reference.1.estimate.value,
            reference.1.estimate.stderr,
            reference.1.route.clone(),
        );
        for (record, e) in &members {
            let s = combined_stderr(e.estimate.stderr, ref_err);
            let diff = (e.estimate.value - ref_value).abs();
            let z = if s > 0.0 {
                diff / s
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(ReportRow {
                quantity: quantity.clone(),
                route: e.route.clone(),
                record: record.clone(),
                value: e.estimate.value,
                stderr: e.estimate.stderr,
                reference_route: ref_route.clone(),
                z,
                agrees: z <= 3.0,
            });
        }
    }
    rows
}

pub fn report_markdown(rows: &[ReportRow]) -> String {
    let mut s = String::from(
        "| quantity | route | value | stderr | reference | z | within 3σ | record |\n",
    );
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {:.8} | {:.2e} | {} | {:.2} | {} | {} |\n",
            r.quantity,
            r.route,
            r.value,
            r.stderr,
            r.reference_route,
            r.z,
            if r.agrees { "yes" } else { "NO" },
            r.record
        ));
    }
    s
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("quantity,route,value,stderr,reference,z,agrees,record\n");
    for r in rows {
        s.push_str(&format!(
            "\"{}\",{},{:e},{:e},{},{},{},{}\n",
            r.quantity, r.route, r.value, r.stderr, r.reference_route, r.z, r.agrees, r.record
        ));
    }
    s
}
