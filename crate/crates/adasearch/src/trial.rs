//! Shared trial machinery: run configuration, measurement tracking for both
//! sensing models, per-round instrumentation, and the trial report.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{pointwise_interval, ConfidenceError, Interval};
use crate::elimination::{ElimError, TerminationRule};
use crate::env::{sample_counts, true_top_k, EnvError, EnvironmentMap};
use crate::estimator::{alpha_of_delta, gaussian_interval, EstimatorError, EstimatorState};
use crate::planner::{DwellSchedule, PlannerError, RasterPath};
use crate::sensing::{aggregate_rate, sensitivity_column, SensingConfig, SensingError, SensitivityModel};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no termination after {max_rounds} rounds; aborting trial")]
    MaxRounds { max_rounds: u32, partial: Box<TrialReport> },
    #[error("simulated time exceeded the {limit} s guard; aborting trial")]
    SimTime { limit: f64, partial: Box<TrialReport> },
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Elim(#[from] ElimError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

impl RunError {
    /// The partial report carried by an aborted trial, if any.
    pub fn partial_report(&self) -> Option<&TrialReport> {
        match self {
            RunError::MaxRounds { partial, .. } | RunError::SimTime { partial, .. } => {
                Some(partial)
            }
            _ => None,
        }
    }
}

/// How per-round intervals consume samples: cumulative counts over all
/// dwells so far, or fresh per-round samples only (the variant the theory
/// analyzes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Cumulative,
    Fresh,
}

/// Per-trial run parameters shared by all three algorithms.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: SensitivityModel,
    pub rule: TerminationRule,
    /// Overall error budget; drives the per-round schedule delta_i.
    pub delta_total: f64,
    /// Fixed confidence parameter for the Gaussian intervals. When unset the
    /// round's delta_i maps through the normal quantile instead.
    pub z_alpha: Option<f64>,
    pub tau_0: f64,
    /// Dwell growth constant c in tau_i = tau_0 * c^i.
    pub growth: f64,
    /// Sub-interval length for physical-model measurements.
    pub sub_dt: f64,
    /// Bias b in the plug-in variance rescaling 1/(y + b).
    pub bias: f64,
    pub sampling: SamplingMode,
    pub max_rounds: u32,
    pub ridge: Option<f64>,
}

impl RunConfig {
    pub fn new(model: SensitivityModel) -> Self {
        RunConfig {
            model,
            rule: TerminationRule::Exact,
            delta_total: 0.05,
            z_alpha: None,
            tau_0: 1.0,
            growth: 2.0,
            sub_dt: 1.0,
            bias: 1.0,
            sampling: SamplingMode::Cumulative,
            max_rounds: 50,
            ridge: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.tau_0 > 0.0) {
            return Err(RunError::InvalidConfig(format!("tau_0 must be > 0, got {}", self.tau_0)));
        }
        if !(self.growth > 1.0) {
            return Err(RunError::InvalidConfig(format!(
                "dwell growth must exceed 1, got {}",
                self.growth
            )));
        }
        if !(self.sub_dt > 0.0) || !(self.bias > 0.0) {
            return Err(RunError::InvalidConfig("sub_dt and bias must be > 0".into()));
        }
        if !(self.delta_total > 0.0 && self.delta_total < 1.0) {
            return Err(RunError::InvalidConfig(format!(
                "delta_total must lie in (0, 1), got {}",
                self.delta_total
            )));
        }
        if let Some(a) = self.z_alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(RunError::InvalidConfig(format!(
                    "alpha must lie in (0, 1), got {a}"
                )));
            }
        }
        if let TerminationRule::Approximate { epsilon } = self.rule {
            if !(epsilon > 0.0) {
                return Err(RunError::InvalidConfig(format!(
                    "epsilon must be > 0, got {epsilon}"
                )));
            }
        }
        if self.max_rounds == 0 {
            return Err(RunError::InvalidConfig("max_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-round entry of the trial event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u32,
    pub n_candidates: usize,
    pub n_confirmed: usize,
    pub tau_i: f64,
    pub sim_time: f64,
}

/// Outcome and metrics of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub returned_set: BTreeSet<usize>,
    /// Returned set equals the true top-k (exact-rule notion).
    pub correct: bool,
    /// For the approximate rule: contains every cell at or above the k-th
    /// rate, and every returned rate is within epsilon of it.
    pub k_eps_correct: Option<bool>,
    pub rounds: u32,
    pub sim_runtime: f64,
    /// Time spent dwelling over candidate cells.
    pub sample_time: f64,
    /// (simulated time, |mu_hat(x*) - mu*|) after each round.
    pub source_error: Vec<(f64, f64)>,
    /// (simulated time, ||mu_hat - mu||_2) after each round.
    pub grid_error: Vec<(f64, f64)>,
    pub round_log: Vec<RoundLog>,
    /// Round at which each cell left the candidate set (u32::MAX if it
    /// never did before the run ended).
    pub exit_rounds: Vec<u32>,
    /// Every computed interval covered its true rate, all rounds.
    pub coverage_held: bool,
    /// Confirmed within the true top set, true top set within
    /// confirmed-candidates union, all rounds (only meaningful when the
    /// instance is identifiable).
    pub sandwich_held: bool,
    /// Candidate and confirmed sets stayed disjoint, all rounds.
    pub disjoint_held: bool,
    pub aborted: bool,
}

/// Rolling instrumentation accumulated over a run.
pub(crate) struct TrialInstruments {
    pub sim_time: f64,
    pub sample_time: f64,
    pub round_log: Vec<RoundLog>,
    pub source_error: Vec<(f64, f64)>,
    pub grid_error: Vec<(f64, f64)>,
    pub coverage_held: bool,
    pub sandwich_held: bool,
    pub disjoint_held: bool,
    exit_rounds: Vec<u32>,
    prev_candidates: BTreeSet<usize>,
    truth: Option<BTreeSet<usize>>,
    star_cell: usize,
}

impl TrialInstruments {
    pub fn new(env: &EnvironmentMap, _cfg: &RunConfig) -> Self {
        let star_cell = env
            .mu
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        TrialInstruments {
            sim_time: 0.0,
            sample_time: 0.0,
            round_log: Vec::new(),
            source_error: Vec::new(),
            grid_error: Vec::new(),
            coverage_held: true,
            sandwich_held: true,
            disjoint_held: true,
            exit_rounds: vec![u32::MAX; env.n_cells()],
            prev_candidates: (0..env.n_cells()).collect(),
            truth: true_top_k(env).ok(),
            star_cell,
        }
    }

    pub fn observe_coverage(&mut self, env: &EnvironmentMap, intervals: &BTreeMap<usize, Interval>) {
        for (&x, iv) in intervals {
            if !iv.contains(env.mu[x]) {
                self.coverage_held = false;
            }
        }
    }

    pub fn observe_sets(
        &mut self,
        round: u32,
        candidates: &BTreeSet<usize>,
        confirmed: &BTreeSet<usize>,
    ) {
        if candidates.intersection(confirmed).next().is_some() {
            self.disjoint_held = false;
        }
        for &x in self.prev_candidates.difference(candidates) {
            self.exit_rounds[x] = self.exit_rounds[x].min(round);
        }
        self.prev_candidates = candidates.clone();
        if let Some(truth) = &self.truth {
            let union: BTreeSet<usize> = candidates.union(confirmed).copied().collect();
            if !confirmed.is_subset(truth) || !truth.is_subset(&union) {
                self.sandwich_held = false;
            }
        }
    }

    pub fn record_metrics(&mut self, env: &EnvironmentMap, estimates: &[f64]) {
        let mu_star = env.mu[self.star_cell];
        let src = (estimates[self.star_cell] - mu_star).abs();
        let l2 = estimates
            .iter()
            .zip(&env.mu)
            .map(|(e, m)| (e - m).powi(2))
            .sum::<f64>()
            .sqrt();
        self.source_error.push((self.sim_time, src));
        self.grid_error.push((self.sim_time, l2));
    }
}

/// Assemble the trial report, judging correctness against the ground truth.
pub(crate) fn finish_report(
    env: &EnvironmentMap,
    cfg: &RunConfig,
    returned: BTreeSet<usize>,
    rounds: u32,
    inst: TrialInstruments,
) -> TrialReport {
    let correct = inst.truth.as_ref().map(|t| *t == returned).unwrap_or(false);
    let k_eps_correct = match cfg.rule {
        TerminationRule::Approximate { epsilon } => {
            let mu_k = env.rate_order_stat(env.k).unwrap_or(0.0);
            let must: BTreeSet<usize> = env
                .mu
                .iter()
                .enumerate()
                .filter(|(_, m)| **m >= mu_k)
                .map(|(x, _)| x)
                .collect();
            Some(
                must.is_subset(&returned)
                    && returned.iter().all(|x| env.mu[*x] >= mu_k - epsilon),
            )
        }
        TerminationRule::Exact => None,
    };
    TrialReport {
        returned_set: returned,
        correct,
        k_eps_correct,
        rounds,
        sim_runtime: inst.sim_time,
        sample_time: inst.sample_time,
        source_error: inst.source_error,
        grid_error: inst.grid_error,
        round_log: inst.round_log,
        exit_rounds: inst.exit_rounds,
        coverage_held: inst.coverage_held,
        sandwich_held: inst.sandwich_held,
        disjoint_held: inst.disjoint_held,
        aborted: false,
    }
}

pub(crate) fn mark_aborted(mut report: TrialReport) -> TrialReport {
    report.aborted = true;
    report
}

/// Cumulative or per-round measurement state for the pointwise model.
pub(crate) struct PointwiseTracker {
    counts: Vec<u64>,
    dwell: Vec<f64>,
    estimates: Vec<f64>,
    fresh: bool,
}

impl PointwiseTracker {
    fn new(n_cells: usize, fresh: bool) -> Self {
        PointwiseTracker {
            counts: vec![0; n_cells],
            dwell: vec![0.0; n_cells],
            estimates: vec![0.0; n_cells],
            fresh,
        }
    }

    fn observe_cells(
        &mut self,
        env: &EnvironmentMap,
        cells: &BTreeSet<usize>,
        tau: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), RunError> {
        for &x in cells {
            let n = sample_counts(rng, env.mu[x], tau)?;
            if self.fresh {
                self.counts[x] = n;
                self.dwell[x] = tau;
            } else {
                self.counts[x] += n;
                self.dwell[x] += tau;
            }
            self.estimates[x] = self.counts[x] as f64 / self.dwell[x];
        }
        Ok(())
    }

    fn intervals(
        &self,
        tracked: &BTreeSet<usize>,
        delta_i: f64,
    ) -> Result<BTreeMap<usize, Interval>, RunError> {
        tracked
            .iter()
            .map(|&x| {
                Ok((
                    x,
                    pointwise_interval(self.counts[x], self.dwell[x], delta_i)?,
                ))
            })
            .collect()
    }
}

/// Estimator-backed measurement state for the inverse-square model. Caches
/// the sensitivity column and aggregate rate for every raster configuration.
pub(crate) struct PhysicalTracker {
    estimator: EstimatorState,
    h_cols: Vec<Vec<f64>>,
    rates: Vec<f64>,
    sub_dt: f64,
    bias: f64,
    z_alpha: Option<f64>,
    ridge: Option<f64>,
    fresh: bool,
    posterior_mu: Vec<f64>,
    posterior_sigma: Vec<f64>,
    counts_buf: Vec<u64>,
}

impl PhysicalTracker {
    fn new(env: &EnvironmentMap, cfg: &RunConfig, path: &RasterPath) -> Result<Self, RunError> {
        let n = env.n_cells();
        let mut h_cols = Vec::with_capacity(path.len());
        let mut rates = Vec::with_capacity(path.len());
        for z in &path.configs {
            h_cols.push(sensitivity_column(env, &cfg.model, z)?);
            rates.push(aggregate_rate(env, &cfg.model, z)?);
        }
        Ok(PhysicalTracker {
            estimator: EstimatorState::new(n, cfg.bias)?,
            h_cols,
            rates,
            sub_dt: cfg.sub_dt,
            bias: cfg.bias,
            z_alpha: cfg.z_alpha,
            ridge: cfg.ridge,
            fresh: cfg.sampling == SamplingMode::Fresh,
            posterior_mu: vec![0.0; n],
            posterior_sigma: vec![0.0; n],
            counts_buf: Vec::new(),
        })
    }

    fn observe_config(
        &mut self,
        config_idx: usize,
        dwell: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), RunError> {
        let m = (dwell / self.sub_dt).round().max(1.0) as usize;
        let dt = dwell / m as f64;
        let rate = self.rates[config_idx];
        self.counts_buf.clear();
        for _ in 0..m {
            self.counts_buf.push(sample_counts(rng, rate, dt)?);
        }
        let col = &self.h_cols[config_idx];
        self.estimator.update_dwell(col, &self.counts_buf, dt)?;
        Ok(())
    }

    /// One measurement at an arbitrary sensor position (receding-horizon
    /// flights leave the raster path).
    pub(crate) fn observe_free(
        &mut self,
        env: &EnvironmentMap,
        model: &SensitivityModel,
        position: [f64; 3],
        duration: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), RunError> {
        let z = SensingConfig { position, cell_index: 0 };
        let rate = aggregate_rate(env, model, &z)?;
        let col = sensitivity_column(env, model, &z)?;
        let y = sample_counts(rng, rate, duration)?;
        self.estimator.update_dwell(&col, &[y], duration)?;
        Ok(())
    }

    fn solve(&mut self) -> Result<(), RunError> {
        let sol = self.estimator.solve(self.ridge)?;
        self.posterior_mu = sol.mu_hat;
        self.posterior_sigma = sol.sigma_diag;
        Ok(())
    }

    fn intervals(
        &mut self,
        tracked: &BTreeSet<usize>,
        delta_i: f64,
    ) -> Result<BTreeMap<usize, Interval>, RunError> {
        self.solve()?;
        let z = alpha_of_delta(self.z_alpha.unwrap_or(delta_i))?;
        tracked
            .iter()
            .map(|&x| {
                Ok((
                    x,
                    gaussian_interval(self.posterior_mu[x], self.posterior_sigma[x], z)?,
                ))
            })
            .collect()
    }

    pub(crate) fn reset(&mut self) -> Result<(), RunError> {
        self.estimator = EstimatorState::new(self.posterior_mu.len(), self.bias)?;
        Ok(())
    }

    pub(crate) fn n_measurements(&self) -> usize {
        self.estimator.n_measurements()
    }

    pub(crate) fn sigma_diag(&self) -> &[f64] {
        &self.posterior_sigma
    }
}

/// Model-dispatching measurement tracker used by all round loops.
pub(crate) enum MeasurementTracker {
    Pointwise(PointwiseTracker),
    Physical(PhysicalTracker),
}

impl MeasurementTracker {
    pub fn new(env: &EnvironmentMap, cfg: &RunConfig, path: &RasterPath) -> Result<Self, RunError> {
        Ok(match cfg.model {
            SensitivityModel::Pointwise => MeasurementTracker::Pointwise(PointwiseTracker::new(
                env.n_cells(),
                cfg.sampling == SamplingMode::Fresh,
            )),
            SensitivityModel::InverseSquare { .. } => {
                MeasurementTracker::Physical(PhysicalTracker::new(env, cfg, path)?)
            }
        })
    }

    /// Collect one full traversal: candidates dwell per the schedule, other
    /// configurations pass at `tau_0`. The pointwise model only draws counts
    /// over candidate cells (the drive-over measurements of settled cells
    /// carry no further information for it); the physical model measures at
    /// every configuration.
    pub fn collect_round(
        &mut self,
        env: &EnvironmentMap,
        schedule: &DwellSchedule,
        candidates: &BTreeSet<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), RunError> {
        match self {
            MeasurementTracker::Pointwise(t) => {
                let tau_i = schedule
                    .dwell
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                t.observe_cells(env, candidates, tau_i, rng)
            }
            MeasurementTracker::Physical(t) => {
                if t.fresh {
                    t.reset()?;
                }
                for (idx, &dwell) in schedule.dwell.iter().enumerate() {
                    t.observe_config(idx, dwell, rng)?;
                }
                Ok(())
            }
        }
    }

    pub fn intervals(
        &mut self,
        tracked: &BTreeSet<usize>,
        delta_i: f64,
    ) -> Result<BTreeMap<usize, Interval>, RunError> {
        match self {
            MeasurementTracker::Pointwise(t) => t.intervals(tracked, delta_i),
            MeasurementTracker::Physical(t) => t.intervals(tracked, delta_i),
        }
    }

    pub fn estimates(&self) -> &[f64] {
        match self {
            MeasurementTracker::Pointwise(t) => &t.estimates,
            MeasurementTracker::Physical(t) => &t.posterior_mu,
        }
    }

    pub fn physical_mut(&mut self) -> Option<&mut PhysicalTracker> {
        match self {
            MeasurementTracker::Physical(t) => Some(t),
            MeasurementTracker::Pointwise(_) => None,
        }
    }
}
