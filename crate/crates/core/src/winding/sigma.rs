use serde::{Deserialize, Serialize};

use super::chain::{build_links, sample_displacement, Boundary, BoundaryMeasures, WindingChain};
use super::quenched::{quenched_moments, QuenchedLaw};
use crate::error::{invalid, Error, Result};
use crate::noise::RngStream;
use crate::parallel::try_map_replicas;
use crate::she::{SolverParams, SpaceTimeNoise};
use crate::stats::{ks_standard_normal, Estimate, KsResult};

/// Unit intervals dropped at each end before covariances are averaged.
pub const WINDOW_MARGIN: usize = 5;
pub const DEFAULT_LAG_MAX: usize = 10;

/// What one environment contributes: its quenched law (if requested) and sampled paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub env: usize,
    pub quenched: Option<QuenchedLaw>,
    pub windings: Vec<i64>,
    pub endpoints: Vec<f64>,
    sums: PathSums,
}

/// Sufficient statistics of the paths of one environment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct PathSums {
    paths: f64,
    y1: f64,
    y2: f64,
    eta_sum: f64,
    eta_count: f64,
    lag_products: Vec<f64>,
    lag_counts: Vec<f64>,
}

impl PathSums {
    fn add(&mut self, other: &PathSums, sign: f64) {
        self.paths += sign * other.paths;
        self.y1 += sign * other.y1;
        self.y2 += sign * other.y2;
        self.eta_sum += sign * other.eta_sum;
        self.eta_count += sign * other.eta_count;
        if self.lag_products.len() < other.lag_products.len() {
            self.lag_products.resize(other.lag_products.len(), 0.0);
            self.lag_counts.resize(other.lag_counts.len(), 0.0);
        }
        for l in 0..other.lag_products.len() {
            self.lag_products[l] += sign * other.lag_products[l];
            self.lag_counts[l] += sign * other.lag_counts[l];
        }
    }

    fn path_variance(&self) -> f64 {
        let m = self.y1 / self.paths;
        self.y2 / self.paths - m * m
    }

    fn covariances(&self) -> Vec<f64> {
        let mu = self.eta_sum / self.eta_count;
        self.lag_products
            .iter()
            .zip(&self.lag_counts)
            .map(|(p, c)| p / c - mu * mu)
            .collect()
    }
}

fn sum_of_covariances(c: &[f64]) -> f64 {
    c[0] + 2.0 * c[1..].iter().sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingRun {
    pub t: f64,
    pub boundary: Boundary,
    pub paths_per_env: usize,
    pub lag_max: usize,
    pub environments: Vec<EnvironmentRecord>,
}

/// Settings shared by every environment of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingRunConfig {
    pub t: f64,
    pub boundaries: Vec<Boundary>,
    pub n_env: usize,
    pub paths_per_env: usize,
    pub lag_max: usize,
    pub quenched: bool,
}

fn environment_record(
    chain: &WindingChain,
    config: &WindingRunConfig,
    env: usize,
    stream: &RngStream,
) -> Result<EnvironmentRecord> {
    let quenched = if config.quenched {
        Some(quenched_moments(chain)?)
    } else {
        None
    };
    let samples = sample_displacement(chain, config.paths_per_env, &mut stream.rng());
    let mut sums = PathSums {
        lag_products: vec![0.0; config.lag_max + 1],
        lag_counts: vec![0.0; config.lag_max + 1],
        ..Default::default()
    };
    let intervals = chain.intervals();
    let lo = WINDOW_MARGIN.min(intervals);
    let hi = intervals.saturating_sub(WINDOW_MARGIN).max(lo);
    for s in &samples {
        let y = s.winding as f64;
        sums.paths += 1.0;
        sums.y1 += y;
        sums.y2 += y * y;
        let etas = &s.etas[lo..hi];
        sums.eta_sum += etas.iter().sum::<i64>() as f64;
        sums.eta_count += etas.len() as f64;
        for l in 0..config.lag_max.saturating_add(1).min(etas.len()) {
            sums.lag_products[l] += etas
                .iter()
                .zip(&etas[l..])
                .map(|(a, b)| (a * b) as f64)
                .sum::<f64>();
            sums.lag_counts[l] += (etas.len() - l) as f64;
        }
    }
    Ok(EnvironmentRecord {
        env,
        quenched,
        windings: samples.iter().map(|s| s.winding).collect(),
        endpoints: samples.iter().map(|s| s.endpoint).collect(),
        sums,
    })
}

/// Builds the links of each environment once and, for every requested
/// boundary, a chain with its quenched law and sampled paths. Environment `e`
/// uses stream `(seed, e)`: substream 0 for boundary measures, 1 for the noise,
/// `2 + b` for path sampling under boundary `b`. Returns one run per boundary.
pub fn run_environments(
    params: &SolverParams,
    config: &WindingRunConfig,
    seed: u64,
) -> Result<Vec<WindingRun>> {
    if config.n_env == 0 || config.boundaries.is_empty() {
        return Err(invalid(
            "n_env",
            "need at least one environment and one boundary",
        ));
    }
    let window = (config.t.floor() as usize).saturating_sub(2 * WINDOW_MARGIN);
    if config.paths_per_env > 0 && config.lag_max > 0 && config.lag_max >= window {
        return Err(invalid(
            "K",
            format!(
                "lag {} does not fit the stationary window of {window} intervals",
                config.lag_max
            ),
        ));
    }
    let per_env = try_map_replicas(config.n_env, |env| {
        let root = RngStream::new(seed, env as u64);
        let links = build_links(config.t, params, &SpaceTimeNoise::new(root.substream(1)))?;
        config
            .boundaries
            .iter()
            .enumerate()
            .map(|(b, kind)| {
                let measures = BoundaryMeasures::new(*kind, params, &root.substream(0))?;
                let chain = WindingChain::from_links(links.clone(), measures)?;
                environment_record(&chain, config, env, &root.substream(2 + b as u64))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(config
        .boundaries
        .iter()
        .enumerate()
        .map(|(b, kind)| WindingRun {
            t: config.t,
            boundary: *kind,
            paths_per_env: config.paths_per_env,
            lag_max: config.lag_max,
            environments: per_env.iter().map(|e| e[b].clone()).collect(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaEmpirical {
    /// (a) `Var(Y)/t` over all paths.
    pub path_variance: Estimate,
    /// (b) `Σ_{|k| ≤ K} Cov(η_0, η_k)` over the stationary window.
    pub sum_of_covariances: Estimate,
    pub covariances: Vec<f64>,
    /// Size of the last retained term, `2|Cov(η_0, η_K)|`.
    pub tail: f64,
    pub n_env: usize,
    pub paths_per_env: usize,
}

/// Delete-one-environment jackknife of a statistic of pooled sums.
fn jackknife(
    records: &[EnvironmentRecord],
    total: &PathSums,
    stat: impl Fn(&PathSums) -> f64,
) -> f64 {
    let e = records.len() as f64;
    if records.len() < 2 {
        return f64::INFINITY;
    }
    let values: Vec<f64> = records
        .iter()
        .map(|r| {
            let mut s = total.clone();
            s.add(&r.sums, -1.0);
            stat(&s)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / e;
    ((e - 1.0) / e * values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Both empirical routes from an existing run.
pub fn sigma_from_run(run: &WindingRun, seed: u64) -> Result<SigmaEmpirical> {
    if run.paths_per_env == 0 {
        return Err(invalid("paths", "the run carries no sampled paths"));
    }
    let mut total = PathSums::default();
    for r in &run.environments {
        total.add(&r.sums, 1.0);
    }
    let t = run.t;
    let a = |s: &PathSums| s.path_variance() / t;
    let b = |s: &PathSums| sum_of_covariances(&s.covariances());
    let n = total.paths as u64;
    let covariances = total.covariances();
    Ok(SigmaEmpirical {
        path_variance: Estimate {
            value: a(&total),
            stderr: jackknife(&run.environments, &total, a),
            n,
            seed,
            runtime_s: 0.0,
        },
        sum_of_covariances: Estimate {
            value: b(&total),
            stderr: jackknife(&run.environments, &total, b),
            n,
            seed,
            runtime_s: 0.0,
        },
        tail: 2.0 * covariances.last().copied().unwrap_or(0.0).abs(),
        covariances,
        n_env: run.environments.len(),
        paths_per_env: run.paths_per_env,
    })
}

/// Empirical effective diffusivity with invariant-measure boundaries.
pub fn sigma_empirical(
    params: &SolverParams,
    t: f64,
    n_env: usize,
    paths_per_env: usize,
    lag_max: usize,
    seed: u64,
) -> Result<SigmaEmpirical> {
    if t < 50.0 {
        return Err(invalid(
            "t",
            format!("need t >= 50 for a stationary window, got {t}"),
        ));
    }
    let start = std::time::Instant::now();
    let config = WindingRunConfig {
        t,
        boundaries: vec![Boundary::Stationary],
        n_env,
        paths_per_env: paths_per_env.max(1),
        lag_max,
        quenched: false,
    };
    let run = run_environments(params, &config, seed)?.remove(0);
    let mut out = sigma_from_run(&run, seed)?;
    let elapsed = start.elapsed().as_secs_f64();
    out.path_variance.runtime_s = elapsed;
    out.sum_of_covariances.runtime_s = elapsed;
    Ok(out)
}

/// Mean over environments of the quenched endpoint variance, with its stderr.
pub fn mean_quenched_variance(run: &WindingRun, seed: u64) -> Result<Estimate> {
    let v: Vec<f64> = run
        .environments
        .iter()
        .map(|r| r.quenched.as_ref().map(|q| q.variance))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| invalid("quenched", "run made without quenched laws"))?;
    Ok(Estimate::from_samples(&v, seed))
}

/// Annealed CLT check: the first path of every environment, scaled by
/// `√(Σ t)`, tested against `N(0, 1)`. One path per environment keeps the
/// sample independent.
pub fn winding_clt(run: &WindingRun, sigma: f64) -> Result<(Vec<f64>, KsResult)> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    let scale = (sigma * run.t).sqrt();
    let z: Vec<f64> = run
        .environments
        .iter()
        .filter_map(|r| r.endpoints.first())
        .map(|e| e / scale)
        .collect();
    if z.len() < crate::height::CLT_MIN_REPLICAS {
        return Err(Error::Underpowered(format!(
            "{} environments with paths < {}",
            z.len(),
            crate::height::CLT_MIN_REPLICAS
        )));
    }
    let ks = ks_standard_normal(&z);
    Ok((z, ks))
}
