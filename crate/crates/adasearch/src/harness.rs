//! Experiment orchestration: suite configs, matched-seed trial execution,
//! CSV/JSON rendering, and plot-ready aggregate files.
//!
//! A suite expands its sweep axes (mu_bar, k, cell_size) into environment
//! configurations, builds one environment per (configuration, trial index),
//! and runs every requested algorithm on that same environment with an
//! independent measurement stream. Reruns with identical config and seed
//! produce byte-identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{run_infomax, run_naivesearch, InfoMaxConfig, NaiveMode};
use crate::complexity::{complexity_terms, i_fin_bound, ComplexityError, ComplexityReport};
use crate::elimination::{run_adasearch, TerminationRule};
use crate::env::{build_random_env, EnvError, EnvironmentMap, GridSpec, RngSeed};
use crate::estimator::PosteriorSummary;
use crate::sensing::SensitivityModel;
use crate::trial::{RunConfig, RunError, SamplingMode, TrialReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "adasearch")]
    AdaSearch,
    #[serde(rename = "naivesearch")]
    NaiveSearch,
    #[serde(rename = "infomax")]
    InfoMax,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::AdaSearch => "adasearch",
            Algorithm::NaiveSearch => "naivesearch",
            Algorithm::InfoMax => "infomax",
        }
    }

    fn stream_tag(&self) -> u64 {
        match self {
            Algorithm::AdaSearch => 1,
            Algorithm::NaiveSearch => 2,
            Algorithm::InfoMax => 3,
        }
    }
}

fn default_trials() -> usize {
    25
}
fn default_delta() -> f64 {
    0.05
}
fn default_tau0() -> f64 {
    1.0
}
fn default_growth() -> f64 {
    2.0
}
fn default_bias() -> f64 {
    1.0
}
fn default_max_rounds() -> u32 {
    50
}
fn default_naive_mode() -> NaiveMode {
    NaiveMode::ConstantSpeed
}
fn default_sampling() -> SamplingMode {
    SamplingMode::Cumulative
}
fn default_termination() -> TerminationRule {
    TerminationRule::Exact
}
fn default_ifin_constant() -> f64 {
    8.0
}

/// Declarative suite description, read from a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub grid: GridSpec,
    pub k: usize,
    /// Sweep over source counts (overrides `k` when present).
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    /// Explicit source rates; defaults to 800 for k = 1 and to rates evenly
    /// spanning [800, 1000] for k > 1.
    #[serde(default)]
    pub source_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_bar: Option<f64>,
    /// Sweep over background ceilings (overrides `mu_bar` when present).
    #[serde(default)]
    pub mu_bars: Option<Vec<f64>>,
    /// Sweep over cell sizes (environment scale).
    #[serde(default)]
    pub cell_sizes: Option<Vec<f64>>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_naive_mode")]
    pub naive_mode: NaiveMode,
    pub sensing: SensitivityModel,
    #[serde(default = "default_delta")]
    pub delta_total: f64,
    /// Fixed confidence parameter for Gaussian intervals (physical model).
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_tau0")]
    pub tau_0: f64,
    #[serde(default = "default_growth")]
    pub growth: f64,
    /// Physical-model measurement sub-interval; defaults to tau_0.
    #[serde(default)]
    pub sub_dt: Option<f64>,
    #[serde(default = "default_bias")]
    pub bias: f64,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMode,
    #[serde(default = "default_termination")]
    pub termination: TerminationRule,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default)]
    pub infomax: InfoMaxConfig,
    /// Universal constant C in the per-cell round-bound prediction.
    #[serde(default = "default_ifin_constant")]
    pub i_fin_constant: f64,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: SuiteConfig = serde_json::from_str(text)?;
        cfg.validated()
    }

    fn validated(self) -> Result<Self, HarnessError> {
        self.grid.validate()?;
        if self.algorithms.is_empty() {
            return Err(HarnessError::Config("algorithms must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be >= 1".into()));
        }
        if self.mu_bar.is_none() && self.mu_bars.is_none() {
            return Err(HarnessError::Config("one of mu_bar / mu_bars is required".into()));
        }
        for desc in self.descriptors() {
            desc.validate(&self)?;
        }
        Ok(self)
    }

    fn mu_bar_axis(&self) -> Vec<f64> {
        self.mu_bars
            .clone()
            .unwrap_or_else(|| vec![self.mu_bar.expect("validated")])
    }

    fn k_axis(&self) -> Vec<usize> {
        self.ks.clone().unwrap_or_else(|| vec![self.k])
    }

    fn cell_axis(&self) -> Vec<f64> {
        self.cell_sizes
            .clone()
            .unwrap_or_else(|| vec![self.grid.cell_size])
    }

    /// Source rates for a given k: explicit, or 800 alone, or evenly
    /// spanning [800, 1000].
    pub fn rates_for_k(&self, k: usize) -> Vec<f64> {
        if let Some(rates) = &self.source_rates {
            if rates.len() == k {
                return rates.clone();
            }
        }
        if k == 1 {
            vec![800.0]
        } else {
            (0..k)
                .map(|i| 800.0 + 200.0 * i as f64 / (k - 1) as f64)
                .collect()
        }
    }

    /// Expand the sweep axes into concrete environment configurations.
    pub fn descriptors(&self) -> Vec<ConfigDescriptor> {
        let mut out = Vec::new();
        let mut id = 0;
        for cell_size in self.cell_axis() {
            for k in self.k_axis() {
                for mu_bar in self.mu_bar_axis() {
                    let mut grid = self.grid.clone();
                    grid.cell_size = cell_size;
                    out.push(ConfigDescriptor {
                        id,
                        grid,
                        k,
                        source_rates: self.rates_for_k(k),
                        mu_bar,
                    });
                    id += 1;
                }
            }
        }
        out
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.sensing,
            rule: self.termination,
            delta_total: self.delta_total,
            z_alpha: self.alpha,
            tau_0: self.tau_0,
            growth: self.growth,
            sub_dt: self.sub_dt.unwrap_or(self.tau_0),
            bias: self.bias,
            sampling: self.sampling,
            max_rounds: self.max_rounds,
            ridge: None,
        }
    }

    /// Environment for one (configuration, trial) pair. All algorithms in
    /// the suite consume this same instance.
    pub fn environment(&self, desc: &ConfigDescriptor, trial: usize) -> Result<EnvironmentMap, EnvError> {
        build_random_env(
            RngSeed(self.seed).child(&[0xe4, desc.id as u64, trial as u64]),
            desc.grid.clone(),
            desc.k,
            &desc.source_rates,
            desc.mu_bar,
        )
    }

    /// Measurement stream for one (configuration, trial, algorithm) triple.
    pub fn measurement_stream(
        &self,
        desc: &ConfigDescriptor,
        trial: usize,
        algorithm: Algorithm,
    ) -> rand_chacha::ChaCha8Rng {
        RngSeed(self.seed).stream(&[
            0x6d,
            desc.id as u64,
            trial as u64,
            algorithm.stream_tag(),
        ])
    }
}

/// One concrete environment configuration within a suite.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigDescriptor {
    pub id: usize,
    pub grid: GridSpec,
    pub k: usize,
    pub source_rates: Vec<f64>,
    pub mu_bar: f64,
}

impl ConfigDescriptor {
    fn validate(&self, cfg: &SuiteConfig) -> Result<(), HarnessError> {
        let n = self.grid.n_cells();
        if self.k == 0 || self.k > n {
            return Err(HarnessError::Config(format!(
                "k = {} out of range for {} cells",
                self.k, n
            )));
        }
        if self.source_rates.len() != self.k {
            return Err(HarnessError::Config(format!(
                "{} source rates for k = {}",
                self.source_rates.len(),
                self.k
            )));
        }
        let min_src = self.source_rates.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.k < n && min_src <= self.mu_bar {
            return Err(HarnessError::Config(format!(
                "source rate {min_src} does not exceed mu_bar {}",
                self.mu_bar
            )));
        }
        if cfg.alpha.is_none() && !(cfg.delta_total > 0.0 && cfg.delta_total < 1.0) {
            return Err(HarnessError::Config("delta_total must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One algorithm run on one environment.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub config_id: usize,
    pub algorithm: &'static str,
    pub mu_bar: f64,
    pub k: usize,
    pub cell_size: f64,
    pub trial: usize,
    pub env_hash: u64,
    pub report: TrialReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResults {
    pub descriptors: Vec<ConfigDescriptor>,
    pub rows: Vec<TrialRow>,
}

fn run_one(
    cfg: &SuiteConfig,
    desc: &ConfigDescriptor,
    trial: usize,
    algorithm: Algorithm,
    env: &EnvironmentMap,
) -> Result<TrialReport, RunError> {
    let run_cfg = cfg.run_config();
    let mut rng = cfg.measurement_stream(desc, trial, algorithm);
    let outcome = match algorithm {
        Algorithm::AdaSearch => run_adasearch(env, &run_cfg, &mut rng),
        Algorithm::NaiveSearch => run_naivesearch(env, &run_cfg, cfg.naive_mode, &mut rng),
        Algorithm::InfoMax => run_infomax(env, &run_cfg, &cfg.infomax, &mut rng),
    };
    match outcome {
        Ok(report) => Ok(report),
        // Aborted trials are recorded; the suite continues.
        Err(e) => match e.partial_report() {
            Some(partial) => Ok(partial.clone()),
            None => Err(e),
        },
    }
}

/// Run every (configuration, trial, algorithm) combination. Trials execute
/// in parallel across `parallelism` threads; outputs are ordered
/// deterministically regardless.
pub fn run_suite(cfg: &SuiteConfig, parallelism: usize) -> Result<SuiteResults, HarnessError> {
    let descriptors = cfg.descriptors();
    let jobs: Vec<(usize, usize)> = descriptors
        .iter()
        .flat_map(|d| (0..cfg.trials).map(move |t| (d.id, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let results: Vec<Result<Vec<TrialRow>, HarnessError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(desc_id, trial)| {
                let desc = &descriptors[desc_id];
                let env = cfg.environment(desc, trial)?;
                let env_hash = env.content_hash();
                let mut rows = Vec::with_capacity(cfg.algorithms.len());
                for &algorithm in &cfg.algorithms {
                    let report = run_one(cfg, desc, trial, algorithm, &env)?;
                    rows.push(TrialRow {
                        config_id: desc.id,
                        algorithm: algorithm.name(),
                        mu_bar: desc.mu_bar,
                        k: desc.k,
                        cell_size: desc.grid.cell_size,
                        trial,
                        env_hash,
                        report,
                    });
                }
                Ok(rows)
            })
            .collect()
    });

    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(SuiteResults { descriptors, rows })
}

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::from("")
    }
}

fn set_to_string(set: &std::collections::BTreeSet<usize>) -> String {
    set.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

/// Per-trial CSV.
pub fn trials_csv(results: &SuiteResults) -> String {
    let mut out = String::from(
        "config_id,algorithm,rows,cols,cell_size,k,mu_bar,trial,env_hash,correct,k_eps_correct,rounds,sim_runtime,sample_time,aborted,coverage_held,sandwich_held,disjoint_held,returned_set\n",
    );
    for (desc, row) in results.rows.iter().map(|r| (&results.descriptors[r.config_id], r)) {
        let rep = &row.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:016x},{},{},{},{},{},{},{},{},{},{}",
            row.config_id,
            row.algorithm,
            desc.grid.rows,
            desc.grid.cols,
            fmt_f(row.cell_size),
            row.k,
            fmt_f(row.mu_bar),
            row.trial,
            row.env_hash,
            rep.correct,
            rep.k_eps_correct.map(|b| b.to_string()).unwrap_or_default(),
            rep.rounds,
            fmt_f(rep.sim_runtime),
            fmt_f(rep.sample_time),
            rep.aborted,
            rep.coverage_held,
            rep.sandwich_held,
            rep.disjoint_held,
            set_to_string(&rep.returned_set),
        );
    }
    out
}

/// Per-round event log CSV across all trials.
pub fn rounds_csv(results: &SuiteResults) -> String {
    let mut out = String::from("config_id,algorithm,trial,round,candidates,confirmed,tau_i,sim_time\n");
    for row in &results.rows {
        for log in &row.report.round_log {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.config_id,
                row.algorithm,
                row.trial,
                log.round,
                log.n_candidates,
                log.n_confirmed,
                fmt_f(log.tau_i),
                fmt_f(log.sim_time),
            );
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub config_id: usize,
    pub algorithm: String,
    pub mu_bar: f64,
    pub k: usize,
    pub cell_size: f64,
    pub n: usize,
    pub aborts: usize,
    pub correct_rate: f64,
    pub rounds_mean: f64,
    pub rounds_std: f64,
    pub rounds_min: f64,
    pub rounds_max: f64,
    pub runtime_mean: f64,
    pub runtime_std: f64,
    pub runtime_min: f64,
    pub runtime_max: f64,
    pub sample_mean: f64,
    pub sample_std: f64,
}

fn stats(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

/// Per-(configuration, algorithm) aggregates.
pub fn aggregate(results: &SuiteResults) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, &str), Vec<&TrialRow>> = BTreeMap::new();
    for row in &results.rows {
        groups.entry((row.config_id, row.algorithm)).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((config_id, algorithm), rows)| {
            let rounds: Vec<f64> = rows.iter().map(|r| r.report.rounds as f64).collect();
            let runtime: Vec<f64> = rows.iter().map(|r| r.report.sim_runtime).collect();
            let sample: Vec<f64> = rows.iter().map(|r| r.report.sample_time).collect();
            let (rm, rs, rn, rx) = stats(&rounds);
            let (tm, ts, tn, tx) = stats(&runtime);
            let (sm, ss, _, _) = stats(&sample);
            let first = rows[0];
            AggregateRow {
                config_id,
                algorithm: algorithm.to_string(),
                mu_bar: first.mu_bar,
                k: first.k,
                cell_size: first.cell_size,
                n: rows.len(),
                aborts: rows.iter().filter(|r| r.report.aborted).count(),
                correct_rate: rows.iter().filter(|r| r.report.correct).count() as f64
                    / rows.len() as f64,
                rounds_mean: rm,
                rounds_std: rs,
                rounds_min: rn,
                rounds_max: rx,
                runtime_mean: tm,
                runtime_std: ts,
                runtime_min: tn,
                runtime_max: tx,
                sample_mean: sm,
                sample_std: ss,
            }
        })
        .collect()
}

pub fn aggregate_csv(aggregates: &[AggregateRow]) -> String {
    let mut out = String::from(
        "config_id,algorithm,mu_bar,k,cell_size,n,aborts,correct_rate,rounds_mean,rounds_std,rounds_min,rounds_max,runtime_mean,runtime_std,runtime_min,runtime_max,sample_mean,sample_std\n",
    );
    for a in aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.config_id,
            a.algorithm,
            fmt_f(a.mu_bar),
            a.k,
            fmt_f(a.cell_size),
            a.n,
            a.aborts,
            fmt_f(a.correct_rate),
            fmt_f(a.rounds_mean),
            fmt_f(a.rounds_std),
            fmt_f(a.rounds_min),
            fmt_f(a.rounds_max),
            fmt_f(a.runtime_mean),
            fmt_f(a.runtime_std),
            fmt_f(a.runtime_min),
            fmt_f(a.runtime_max),
            fmt_f(a.sample_mean),
            fmt_f(a.sample_std),
        );
    }
    out
}

/// Step-function value of an error series at time `t`: the last recorded
/// value at or before `t`, the first value before any record, and the final
/// value after the run finishes.
fn series_at(series: &[(f64, f64)], t: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mut val = series[0].1;
    for &(st, sv) in series {
        if st <= t {
            val = sv;
        } else {
            break;
        }
    }
    val
}

/// Plot-ready files derived from suite results: min/mean/max error
/// envelopes over a common time grid, and (for mu_bar sweeps with both
/// adaptive and uniform runs) the runtime-ratio table with the predicted
/// curve overlay.
pub fn plot_data(results: &SuiteResults) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();

    // Error envelopes, resampled to 100 points per (config, algorithm).
    let mut groups: BTreeMap<(usize, &str), Vec<&TrialRow>> = BTreeMap::new();
    for row in &results.rows {
        groups.entry((row.config_id, row.algorithm)).or_default().push(row);
    }
    let mut env_out = String::from(
        "config_id,algorithm,t,source_min,source_mean,source_max,grid_min,grid_mean,grid_max\n",
    );
    for ((config_id, algorithm), rows) in &groups {
        let t_max = rows
            .iter()
            .filter_map(|r| r.report.source_error.last().map(|p| p.0))
            .fold(0.0, f64::max);
        if t_max <= 0.0 {
            continue;
        }
        for j in 1..=100 {
            let t = t_max * j as f64 / 100.0;
            let src: Vec<f64> = rows.iter().map(|r| series_at(&r.report.source_error, t)).collect();
            let grd: Vec<f64> = rows.iter().map(|r| series_at(&r.report.grid_error, t)).collect();
            let (sm, _, sn, sx) = stats(&src);
            let (gm, _, gn, gx) = stats(&grd);
            let _ = writeln!(
                env_out,
                "{},{},{},{},{},{},{},{},{}",
                config_id,
                algorithm,
                fmt_f(t),
                fmt_f(sn),
                fmt_f(sm),
                fmt_f(sx),
                fmt_f(gn),
                fmt_f(gm),
                fmt_f(gx),
            );
        }
    }
    files.insert("plot_error_envelopes.csv".to_string(), env_out);

    // Runtime-ratio table per mu_bar, with the corollary prediction and the
    // reference fit overlay 0.7 * mu_star / (mu_star - mu_bar).
    let has_ratio = groups.keys().any(|(_, a)| *a == "adasearch")
        && groups.keys().any(|(_, a)| *a == "naivesearch");
    if has_ratio {
        let mut out = String::from(
            "config_id,mu_bar,mu_star,ratio_mean,ratio_reciprocal,predicted_reciprocal,fit_ratio\n",
        );
        for desc in &results.descriptors {
            let ada: BTreeMap<usize, f64> = results
                .rows
                .iter()
                .filter(|r| r.config_id == desc.id && r.algorithm == "adasearch")
                .map(|r| (r.trial, r.report.sample_time))
                .collect();
            let naive: BTreeMap<usize, f64> = results
                .rows
                .iter()
                .filter(|r| r.config_id == desc.id && r.algorithm == "naivesearch")
                .map(|r| (r.trial, r.report.sample_time))
                .collect();
            if ada.is_empty() || naive.is_empty() {
                continue;
            }
            let ratios: Vec<f64> = ada
                .iter()
                .filter_map(|(t, a)| naive.get(t).map(|n| n / a))
                .collect();
            if ratios.is_empty() {
                continue;
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let mu_star = desc.source_rates.iter().cloned().fold(0.0, f64::max);
            let predicted = 1.0 - desc.mu_bar / mu_star;
            let fit = 0.7 * mu_star / (mu_star - desc.mu_bar);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                desc.id,
                fmt_f(desc.mu_bar),
                fmt_f(mu_star),
                fmt_f(mean),
                fmt_f(1.0 / mean),
                fmt_f(predicted),
                fmt_f(fit),
            );
        }
        files.insert("plot_ratio.csv".to_string(), out);
    }
    files
}

/// JSON summary document: the aggregates keyed by configuration.
pub fn summary_json(cfg: &SuiteConfig, results: &SuiteResults) -> Result<String, HarnessError> {
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a SuiteConfig,
        descriptors: &'a [ConfigDescriptor],
        aggregates: Vec<AggregateRow>,
    }
    let doc = Summary {
        config: cfg,
        descriptors: &results.descriptors,
        aggregates: aggregate(results),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Write the full output set for a suite run.
pub fn write_outputs(
    cfg: &SuiteConfig,
    results: &SuiteResults,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("trials.csv"), trials_csv(results))?;
    fs::write(out_dir.join("rounds.csv"), rounds_csv(results))?;
    fs::write(out_dir.join("aggregate.csv"), aggregate_csv(&aggregate(results)))?;
    fs::write(out_dir.join("summary.json"), summary_json(cfg, results)?)?;
    for (name, contents) in plot_data(results) {
        fs::write(out_dir.join(name), contents)?;
    }
    Ok(())
}

/// Complexity report for the suite's first configuration at trial 0.
pub fn theory_report(cfg: &SuiteConfig) -> Result<ComplexityReport, HarnessError> {
    let descs = cfg.descriptors();
    let desc = &descs[0];
    let env = cfg.environment(desc, 0)?;
    let eps = match cfg.termination {
        TerminationRule::Approximate { epsilon } => Some(epsilon),
        TerminationRule::Exact => None,
    };
    let mut report = complexity_terms(&env, cfg.tau_0, desc.k, eps)?;
    report.per_cell_i_fin_bound =
        i_fin_bound(&env, desc.k, cfg.delta_total, cfg.tau_0, cfg.i_fin_constant)?;
    report.lower_bound_up_to_constant =
        Some((1.0 / cfg.delta_total).ln() * report.c_adapt);
    Ok(report)
}

/// Posterior export: `cell_index,mu_hat,sigma` rows.
pub fn posterior_csv(posterior: &PosteriorSummary) -> String {
    let mut out = String::from("cell_index,mu_hat,sigma\n");
    for (i, (m, s)) in posterior.mu_hat.iter().zip(&posterior.sigma_diag).enumerate() {
        let _ = writeln!(out, "{},{},{}", i, fmt_f(*m), fmt_f(*s));
    }
    out
}
