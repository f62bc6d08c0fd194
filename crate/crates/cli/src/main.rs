#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use kpzlab::winding::Boundary;
use kpzlab_cli::config::{parse_assignment, parse_config, ExperimentConfig};
use kpzlab_cli::error::{CliError, EXIT_OK, EXIT_TOLERANCE};
use kpzlab_cli::record::{
    build_report, load_records, persist, report_csv, report_markdown, write_atomic,
};
use kpzlab_cli::run::run;
use serde::Serialize;

const THREADS_ENV: &str = "KPZLAB_THREADS";

#[derive(Parser)]
#[command(
    name = "kpzlab",
    version,
    about = "Periodic SHE / KPZ numerics: closed forms, bridge Monte Carlo and direct simulation",
    after_help = after_help()
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every run. Flags override values from `--config`.
#[derive(Args, Serialize, Default)]
struct Global {
    /// TOML file with any of the keys listed below.
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set times=[1.0,2.0]` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    #[serde(skip)]
    set: Vec<String>,
    /// Print the resolved config and exit without running.
    #[arg(long, global = true)]
    #[serde(skip)]
    print_config: bool,

    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides KPZLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for records and artifacts.
    #[arg(long = "out", global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Torus length.
    #[arg(short = 'L', long = "length", visible_alias = "L", global = true)]
    #[serde(rename = "L")]
    length: Option<f64>,
    /// Grid points.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time.
    #[arg(short = 't', long, visible_alias = "T", global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    inner: Option<usize>,
    /// Bridge grid (0 = automatic).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// JSON covariance table (smooth noise).
    #[arg(long, global = true)]
    covariance: Option<PathBuf>,
    /// `white`, or `smooth:<covariance.json>`.
    #[arg(long, global = true, value_parser = parse_noise)]
    #[serde(skip)]
    noise: Option<Noise>,
    /// Environments of winding runs.
    #[arg(long = "n-env", global = true)]
    envs: Option<usize>,
    /// Sampled paths per environment.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Winding boundary kind (repeatable): lebesgue-delta, stationary.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    boundary: Vec<Boundary>,
}

#[derive(Clone, Debug)]
enum Noise {
    White,
    Smooth(PathBuf),
}

fn parse_noise(s: &str) -> Result<Noise, String> {
    match s.split_once(':') {
        None if s == "white" => Ok(Noise::White),
        Some(("smooth", path)) if !path.is_empty() => Ok(Noise::Smooth(PathBuf::from(path))),
        _ => Err(format!("expected `white` or `smooth:<path>`, got `{s}`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the SHE from Z = 1 and write snapshots.
    SheSolve,
    /// Synchronization of the endpoint density from δ₀ and Lebesgue starts.
    Mixing,
    /// Lyapunov exponent.
    #[command(subcommand)]
    Gamma(GammaCmd),
    /// Height-fluctuation variance.
    #[command(subcommand)]
    Sigma2(Sigma2Cmd),
    /// Central limit theorems.
    #[command(subcommand)]
    Clt(CltCmd),
    /// Winding number of the cylinder polymer.
    #[command(subcommand)]
    Winding(WindingCmd),
    /// The explicit corrector.
    #[command(subcommand)]
    Corrector(CorrectorCmd),
    /// Yor density normalization and negative moment.
    Yor,
    /// Iterated-logarithm diagnostic.
    Lil,
    /// Consolidated comparison table of a result directory.
    Report {
        dir: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GammaCmd {
    /// White-noise closed form.
    Closed,
    /// Brownian-bridge Monte Carlo.
    Bridge,
    /// Direct simulation, optionally on a grid ladder.
    Simulate,
    /// Small-β expansion for smooth noise.
    Expand,
}

#[derive(Subcommand)]
enum Sigma2Cmd {
    /// Direct and nested bridge Monte Carlo.
    Mc,
    /// Log-log fit of σ² against L.
    Decay,
    /// Corrector-gradient route.
    Corrector,
}

#[derive(Subcommand)]
enum CltCmd {
    /// Height fluctuations of the SHE.
    Height,
    /// Annealed winding number.
    Winding,
}

#[derive(Subcommand)]
enum WindingCmd {
    /// Sample polymer paths per environment.
    Sample,
    /// Exact quenched law per environment.
    Quenched,
    /// Effective diffusivity by three routes.
    Sigma,
}

#[derive(Subcommand)]
enum CorrectorCmd {
    /// χ at a density.
    Chi,
    /// Functional gradient of χ.
    Grad,
}

fn after_help() -> String {
    let defaults = ExperimentConfig::default().to_toml();
    format!(
        "Config keys and defaults (TOML; absent optional keys: covariance, gamma, sigma2):\n\n{}\n\
         Threads: --threads, else ${THREADS_ENV}, else `threads` from the config, else all cores.\n\
         Exit status: 0 ok, 2 config error, 3 numerical tolerance failure, 4 I/O error, 5 no records.",
        defaults.lines().map(|l| format!("  {l}")).collect::<Vec<_>>().join("\n")
    )
}

fn command_name(c: &Command) -> Option<&'static str> {
    Some(match c {
        Command::SheSolve => "she-solve",
        Command::Mixing => "mixing",
        Command::Gamma(GammaCmd::Closed) => "gamma-closed",
        Command::Gamma(GammaCmd::Bridge) => "gamma-bridge",
        Command::Gamma(GammaCmd::Simulate) => "gamma-simulate",
        Command::Gamma(GammaCmd::Expand) => "gamma-expand",
        Command::Sigma2(Sigma2Cmd::Mc) => "sigma2-mc",
        Command::Sigma2(Sigma2Cmd::Decay) => "sigma2-decay",
        Command::Sigma2(Sigma2Cmd::Corrector) => "sigma2-corrector",
        Command::Clt(CltCmd::Height) => "clt-height",
        Command::Clt(CltCmd::Winding) => "clt-winding",
        Command::Winding(WindingCmd::Sample) => "winding-sample",
        Command::Winding(WindingCmd::Quenched) => "winding-quenched",
        Command::Winding(WindingCmd::Sigma) => "winding-sigma",
        Command::Corrector(CorrectorCmd::Chi) => "corrector-chi",
        Command::Corrector(CorrectorCmd::Grad) => "corrector-grad",
        Command::Yor => "yor",
        Command::Lil => "lil",
        Command::Report { .. } => return None,
    })
}

fn resolve_threads(flag: Option<usize>, config: usize) -> usize {
    flag.filter(|t| *t > 0)
        .or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .filter(|t| *t > 0)
        })
        .or((config > 0).then_some(config))
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn overrides(global: &Global, command: &str) -> Result<toml::Table, CliError> {
    let mut table = toml::Table::try_from(global).map_err(|e| CliError::Syntax(e.to_string()))?;
    for s in &global.set {
        let (k, v) = parse_assignment(s)?;
        table.insert(k, v);
    }
    if let Some(Noise::Smooth(path)) = &global.noise {
        table.insert(
            "covariance".into(),
            toml::Value::String(path.display().to_string()),
        );
    }
    table.insert("command".into(), toml::Value::String(command.to_string()));
    Ok(table)
}

fn report(dir: &Path, csv: Option<&PathBuf>) -> Result<i32, CliError> {
    let records = load_records(dir)?;
    if records.is_empty() {
        return Err(CliError::NoRecords(dir.to_path_buf()));
    }
    let rows = build_report(&records);
    print!("{}", report_markdown(&rows));
    if let Some(path) = csv {
        let text = report_csv(&rows);
        write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    }
    Ok(EXIT_OK)
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let Some(name) = command_name(&cli.command) else {
        let Command::Report { dir, csv } = &cli.command else {
            unreachable!()
        };
        return report(dir, csv.as_ref());
    };
    let mut config = parse_config(cli.global.config.as_deref(), overrides(&cli.global, name)?)?;
    if matches!(cli.global.noise, Some(Noise::White)) {
        config.covariance = None;
    }
    if cli.global.print_config {
        print!("{}", config.to_toml());
        return Ok(EXIT_OK);
    }
    let threads = resolve_threads(cli.global.threads, config.threads);
    kpzlab::parallel::init_threads(threads);
    let start = Instant::now();
    let record = run(&config)?;
    let path = persist(&record, start.elapsed().as_secs_f64(), threads)?;
    for e in &record.estimates {
        println!(
            "{} [{}] = {} ± {:.3e}",
            e.quantity, e.route, e.estimate.value, e.estimate.stderr
        );
    }
    for c in &record.checks {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.pass { "pass" } else { "FAIL" },
            c.detail
        );
    }
    println!("record: {}", path.display());
    Ok(if record.failed_checks().is_empty() {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    })
}

fn main() {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
