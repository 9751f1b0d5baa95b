//! The successive-elimination engine: confirm/prune update rules, the round
//! loop, and the exact and approximate termination criteria.
//!
//! Each round maintains a candidate set `S_i` and a confirmed set `S_top`.
//! A candidate is confirmed when its LCB beats the
//! `(k - |S_top| + 1)`-th largest UCB among candidates; it is pruned when
//! its UCB falls below the `(k - |S_top|)`-th largest LCB. Both comparisons
//! follow the order-statistic conventions: a 0-th largest is +inf (forcing
//! the candidate set to empty once k cells are confirmed) and an index past
//! the set size is -inf.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{round_delta, Interval};
use crate::env::{true_top_k, EnvironmentMap};
use crate::planner::{raster_path, round_schedule};
use crate::trial::{
    finish_report, MeasurementTracker, RoundLog, RunConfig, RunError, TrialInstruments,
};

#[derive(Debug, Error)]
pub enum ElimError {
    #[error("invalid state: missing interval for cell {0}")]
    MissingInterval(usize),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Stopping behavior shared by all algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationRule {
    /// Stop on exact separation of the top-k set.
    Exact,
    /// Additionally stop once all remaining candidate intervals agree within
    /// `epsilon`, returning the candidate/confirmed union.
    Approximate { epsilon: f64 },
}

/// Candidate and confirmed sets for one trial.
#[derive(Debug, Clone)]
pub struct EliminationState {
    pub round: u32,
    pub candidates: BTreeSet<usize>,
    pub confirmed: BTreeSet<usize>,
    pub k: usize,
    pub tau_i: f64,
    pub delta_total: f64,
}

impl EliminationState {
    pub fn new(n_cells: usize, k: usize, delta_total: f64) -> Self {
        EliminationState {
            round: 0,
            candidates: (0..n_cells).collect(),
            confirmed: BTreeSet::new(),
            k,
            tau_i: 0.0,
            delta_total,
        }
    }
}

/// j-th largest of the values, with the elimination conventions:
/// `j = 0` is +inf and `j > len` is -inf.
fn jth_largest(values: &mut Vec<f64>, j: usize) -> f64 {
    if j == 0 {
        return f64::INFINITY;
    }
    if j > values.len() {
        return f64::NEG_INFINITY;
    }
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    values[j - 1]
}

fn require_intervals<'a>(
    cells: &BTreeSet<usize>,
    intervals: &'a BTreeMap<usize, Interval>,
) -> Result<Vec<(usize, &'a Interval)>, ElimError> {
    cells
        .iter()
        .map(|&x| intervals.get(&x).map(|iv| (x, iv)).ok_or(ElimError::MissingInterval(x)))
        .collect()
}

/// Confirm candidates whose LCB strictly exceeds the
/// `(k - |confirmed| + 1)`-th largest candidate UCB.
pub fn top_elim(
    candidates: &BTreeSet<usize>,
    confirmed: &BTreeSet<usize>,
    k: usize,
    intervals: &BTreeMap<usize, Interval>,
) -> Result<BTreeSet<usize>, ElimError> {
    if confirmed.len() > k {
        return Err(ElimError::InvalidState(format!(
            "confirmed set has {} > k = {k} cells",
            confirmed.len()
        )));
    }
    let tracked = require_intervals(candidates, intervals)?;
    let mut ucbs: Vec<f64> = tracked.iter().map(|(_, iv)| iv.ucb).collect();
    let threshold = jth_largest(&mut ucbs, k - confirmed.len() + 1);
    let mut out = confirmed.clone();
    for (x, iv) in tracked {
        if iv.lcb > threshold {
            out.insert(x);
        }
    }
    Ok(out)
}

/// Retain candidates outside the new confirmed set whose UCB still reaches
/// the `(k - |new_confirmed|)`-th largest candidate LCB.
pub fn bot_elim(
    candidates: &BTreeSet<usize>,
    new_confirmed: &BTreeSet<usize>,
    k: usize,
    intervals: &BTreeMap<usize, Interval>,
) -> Result<BTreeSet<usize>, ElimError> {
    if new_confirmed.len() > k {
        return Err(ElimError::InvalidState(format!(
            "confirmed set has {} > k = {k} cells",
            new_confirmed.len()
        )));
    }
    let tracked = require_intervals(candidates, intervals)?;
    let mut lcbs: Vec<f64> = tracked.iter().map(|(_, iv)| iv.lcb).collect();
    let threshold = jth_largest(&mut lcbs, k - new_confirmed.len());
    let mut out = BTreeSet::new();
    for (x, iv) in tracked {
        if !new_confirmed.contains(&x) && iv.ucb >= threshold {
            out.insert(x);
        }
    }
    Ok(out)
}

/// Which exact criterion a run uses: the adaptive engine stops when its
/// candidate set empties; the baselines watch the order statistics over all
/// tracked cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingMode {
    CandidatesExhausted,
    OrderStatistic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Continue,
    Done(BTreeSet<usize>),
}

/// Shared termination check.
///
/// Exact: either the candidate set is empty (adaptive mode, returning the
/// confirmed set) or the k-th largest LCB strictly exceeds the (k+1)-th
/// largest UCB over all tracked cells (baseline mode, returning the top-k by
/// LCB). Approximate: additionally stop when every remaining candidate's LCB
/// reaches the maximum candidate UCB minus epsilon, returning candidates
/// plus confirmed.
pub fn check_termination(
    state: &EliminationState,
    intervals: &BTreeMap<usize, Interval>,
    rule: &TerminationRule,
    mode: StoppingMode,
) -> Result<Decision, ElimError> {
    match mode {
        StoppingMode::CandidatesExhausted => {
            if state.candidates.is_empty() {
                return Ok(Decision::Done(state.confirmed.clone()));
            }
        }
        StoppingMode::OrderStatistic => {
            let mut lcbs: Vec<f64> = intervals.values().map(|iv| iv.lcb).collect();
            let mut ucbs: Vec<f64> = intervals.values().map(|iv| iv.ucb).collect();
            let kth_lcb = jth_largest(&mut lcbs, state.k);
            let k1th_ucb = jth_largest(&mut ucbs, state.k + 1);
            if kth_lcb > k1th_ucb {
                let mut ranked: Vec<(usize, f64)> =
                    intervals.iter().map(|(&x, iv)| (x, iv.lcb)).collect();
                ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                return Ok(Decision::Done(ranked[..state.k].iter().map(|(x, _)| *x).collect()));
            }
        }
    }
    if let TerminationRule::Approximate { epsilon } = rule {
        if state.candidates.is_empty() {
            return Ok(Decision::Done(state.confirmed.clone()));
        }
        let tracked = require_intervals(&state.candidates, intervals)?;
        let min_lcb = tracked.iter().map(|(_, iv)| iv.lcb).fold(f64::INFINITY, f64::min);
        let max_ucb = tracked.iter().map(|(_, iv)| iv.ucb).fold(f64::NEG_INFINITY, f64::max);
        if min_lcb >= max_ucb - epsilon {
            let mut out = state.confirmed.clone();
            out.extend(state.candidates.iter().copied());
            return Ok(Decision::Done(out));
        }
    }
    Ok(Decision::Continue)
}

/// Run the adaptive search on one environment: traverse the raster path each
/// round, dwelling `tau_i = tau_0 * c^i` over candidates and `tau_0`
/// elsewhere, refresh intervals, apply the confirm/prune rules, and stop per
/// the termination rule.
pub fn run_adasearch(
    env: &EnvironmentMap,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<crate::trial::TrialReport, RunError> {
    cfg.validate()?;
    let n = env.n_cells();
    let path = raster_path(&env.grid);
    let mut state = EliminationState::new(n, env.k, cfg.delta_total);
    let mut tracker = MeasurementTracker::new(env, cfg, &path)?;
    let mut inst = TrialInstruments::new(env, cfg);

    for round in 0..cfg.max_rounds {
        let tau_i = cfg.tau_0 * cfg.growth.powi(round as i32);
        let delta_i = round_delta(cfg.delta_total, n, round.max(1))?;
        let schedule = round_schedule(&path, &state.candidates, cfg.tau_0, tau_i, round)?;

        tracker.collect_round(env, &schedule, &state.candidates, rng)?;
        inst.sim_time += schedule.total_time;
        inst.sample_time += tau_i * state.candidates.len() as f64;

        let intervals = tracker.intervals(&state.candidates, delta_i)?;
        inst.observe_coverage(env, &intervals);

        let confirmed = top_elim(&state.candidates, &state.confirmed, state.k, &intervals)?;
        let candidates = bot_elim(&state.candidates, &confirmed, state.k, &intervals)?;
        state.confirmed = confirmed;
        state.candidates = candidates;
        state.round = round;
        state.tau_i = tau_i;

        inst.observe_sets(round, &state.candidates, &state.confirmed);
        inst.record_metrics(env, tracker.estimates());
        inst.round_log.push(RoundLog {
            round,
            n_candidates: state.candidates.len(),
            n_confirmed: state.confirmed.len(),
            tau_i,
            sim_time: inst.sim_time,
        });

        match check_termination(&state, &intervals, &cfg.rule, StoppingMode::CandidatesExhausted)? {
            Decision::Done(set) => return Ok(finish_report(env, cfg, set, round + 1, inst)),
            Decision::Continue => {}
        }
    }
    Err(RunError::MaxRounds {
        max_rounds: cfg.max_rounds,
        partial: Box::new(crate::trial::mark_aborted(finish_report(
            env,
            cfg,
            state.confirmed.clone(),
            cfg.max_rounds,
            inst,
        ))),
    })
}

/// Run with intervals pinned to the true rates (zero width). Terminates in
/// one elimination pass on any identifiable environment; used to validate
/// the correctness backbone independently of sampling.
pub fn run_oracle_intervals(env: &EnvironmentMap) -> Result<BTreeSet<usize>, RunError> {
    let n = env.n_cells();
    let mut state = EliminationState::new(n, env.k, 0.05);
    let intervals: BTreeMap<usize, Interval> = env
        .mu
        .iter()
        .enumerate()
        .map(|(x, &m)| Ok((x, Interval::new(m, m)?)))
        .collect::<Result<_, crate::confidence::ConfidenceError>>()?;
    for _ in 0..2 {
        let confirmed = top_elim(&state.candidates, &state.confirmed, state.k, &intervals)?;
        state.candidates = bot_elim(&state.candidates, &confirmed, state.k, &intervals)?;
        state.confirmed = confirmed;
        if let Decision::Done(set) = check_termination(
            &state,
            &intervals,
            &TerminationRule::Exact,
            StoppingMode::CandidatesExhausted,
        )? {
            return Ok(set);
        }
    }
    // Zero-width correct intervals must separate in one pass; reaching this
    // point means the instance was not identifiable.
    Err(RunError::Env(
        true_top_k(env).err().unwrap_or_else(|| {
            crate::env::EnvError::NonIdentifiable("oracle intervals failed to separate".into())
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lcb: f64, ucb: f64) -> Interval {
        Interval::new(lcb, ucb).unwrap()
    }

    fn table(entries: &[(usize, f64, f64)]) -> BTreeMap<usize, Interval> {
        entries.iter().map(|&(x, l, u)| (x, iv(l, u))).collect()
    }

    #[test]
    fn top_elim_confirms_separated_cell() {
        // k=1: 2nd-largest UCB = 3; LCB(a)=5 > 3 confirms a.
        let intervals = table(&[(0, 5.0, 6.0), (1, 1.0, 2.0), (2, 0.0, 3.0)]);
        let cands: BTreeSet<usize> = [0, 1, 2].into();
        let out = top_elim(&cands, &BTreeSet::new(), 1, &intervals).unwrap();
        assert_eq!(out, BTreeSet::from([0]));
    }

    #[test]
    fn top_elim_empty_candidates_is_noop() {
        let confirmed = BTreeSet::from([7]);
        let out = top_elim(&BTreeSet::new(), &confirmed, 2, &BTreeMap::new()).unwrap();
        assert_eq!(out, confirmed);
    }

    #[test]
    fn top_elim_k2_adds_two() {
        // k=2: threshold = 3rd-largest UCB = 3; a (5>3) and b (3.5>3) join.
        let intervals = table(&[(0, 5.0, 10.0), (1, 3.5, 4.0), (2, 0.0, 3.0), (3, 0.0, 2.0)]);
        let cands: BTreeSet<usize> = [0, 1, 2, 3].into();
        let out = top_elim(&cands, &BTreeSet::new(), 2, &intervals).unwrap();
        assert_eq!(out, BTreeSet::from([0, 1]));
    }

    #[test]
    fn bot_elim_zero_threshold_empties() {
        // k=1 and one confirmed cell: threshold index 0 is +inf.
        let intervals = table(&[(0, 5.0, 6.0), (1, 1.0, 2.0), (2, 0.0, 3.0)]);
        let cands: BTreeSet<usize> = [0, 1, 2].into();
        let confirmed = BTreeSet::from([0]);
        let out = bot_elim(&cands, &confirmed, 1, &intervals).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn bot_elim_prunes_below_top_lcb() {
        // k=1, nothing confirmed: threshold = largest LCB = 5.
        let intervals = table(&[(0, 5.0, 6.0), (1, 1.0, 2.0), (2, 0.0, 3.0)]);
        let cands: BTreeSet<usize> = [0, 1, 2].into();
        let out = bot_elim(&cands, &BTreeSet::new(), 1, &intervals).unwrap();
        assert_eq!(out, BTreeSet::from([0]));
    }

    #[test]
    fn bot_elim_keeps_overlapping_intervals() {
        let intervals = table(&[(0, 0.0, 10.0), (1, 0.0, 10.0), (2, 0.0, 10.0)]);
        let cands: BTreeSet<usize> = [0, 1, 2].into();
        let out = bot_elim(&cands, &BTreeSet::new(), 1, &intervals).unwrap();
        assert_eq!(out, cands);
    }

    #[test]
    fn missing_interval_is_an_error() {
        let intervals = table(&[(0, 1.0, 2.0)]);
        let cands: BTreeSet<usize> = [0, 1].into();
        assert!(matches!(
            top_elim(&cands, &BTreeSet::new(), 1, &intervals),
            Err(ElimError::MissingInterval(1))
        ));
    }

    #[test]
    fn termination_on_empty_candidates() {
        let mut state = EliminationState::new(3, 1, 0.05);
        state.candidates.clear();
        state.confirmed.insert(2);
        let d = check_termination(
            &state,
            &BTreeMap::new(),
            &TerminationRule::Exact,
            StoppingMode::CandidatesExhausted,
        )
        .unwrap();
        assert_eq!(d, Decision::Done(BTreeSet::from([2])));
    }

    #[test]
    fn baseline_order_statistic_termination() {
        // k=1: top LCB 7 > 2nd-largest UCB 6.9.
        let state = EliminationState::new(3, 1, 0.05);
        let intervals = table(&[(0, 7.0, 9.0), (1, 1.0, 6.9), (2, 0.0, 2.0)]);
        let d = check_termination(
            &state,
            &intervals,
            &TerminationRule::Exact,
            StoppingMode::OrderStatistic,
        )
        .unwrap();
        assert_eq!(d, Decision::Done(BTreeSet::from([0])));

        // Not separated if the runner-up UCB reaches 7.
        let intervals = table(&[(0, 7.0, 9.0), (1, 1.0, 7.0), (2, 0.0, 2.0)]);
        let d = check_termination(
            &state,
            &intervals,
            &TerminationRule::Exact,
            StoppingMode::OrderStatistic,
        )
        .unwrap();
        assert_eq!(d, Decision::Continue);
    }

    #[test]
    fn approximate_rule_returns_union() {
        // min LCB 3.8 >= max UCB 4.6 - 1.
        let mut state = EliminationState::new(4, 1, 0.05);
        state.candidates = BTreeSet::from([0, 1]);
        state.confirmed = BTreeSet::new();
        let intervals = table(&[(0, 4.0, 4.5), (1, 3.8, 4.6)]);
        let d = check_termination(
            &state,
            &intervals,
            &TerminationRule::Approximate { epsilon: 1.0 },
            StoppingMode::CandidatesExhausted,
        )
        .unwrap();
        assert_eq!(d, Decision::Done(BTreeSet::from([0, 1])));

        let d = check_termination(
            &state,
            &intervals,
            &TerminationRule::Approximate { epsilon: 0.5 },
            StoppingMode::CandidatesExhausted,
        )
        .unwrap();
        assert_eq!(d, Decision::Continue);
    }

    #[test]
    fn oracle_intervals_return_true_top_set() {
        use crate::env::{build_random_env, GridSpec, RngSeed};
        for seed in 0..20 {
            let grid = GridSpec::new(4, 4, 4.0, 2.0).unwrap();
            let env =
                build_random_env(RngSeed(seed), grid, 2, &[800.0, 900.0], 400.0).unwrap();
            let got = run_oracle_intervals(&env).unwrap();
            assert_eq!(got, true_top_k(&env).unwrap());
        }
    }
}
