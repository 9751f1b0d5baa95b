//! The two comparison algorithms: uniform-dwell raster search
//! (constant-speed and per-round-doubling variants) and receding-horizon
//! information maximization over second-order Bezier trajectories.
//!
//! Both share the adaptive engine's termination logic. The uniform searches
//! also maintain the elimination bookkeeping internally; it never affects
//! their dwell schedule, but it defines the candidate set the approximate
//! termination rule inspects and makes round counts directly comparable.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::round_delta;
use crate::elimination::{
    bot_elim, check_termination, top_elim, Decision, EliminationState, StoppingMode,
};
use crate::env::{EnvironmentMap, GridSpec};
use crate::estimator::PosteriorSummary;
use crate::planner::{raster_path, round_schedule};
use crate::sensing::{sensitivity, SensingConfig, SensitivityModel};
use crate::trial::{
    finish_report, mark_aborted, MeasurementTracker, RoundLog, RunConfig, RunError,
    TrialInstruments, TrialReport,
};

/// Dwell policy for the uniform raster baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaiveMode {
    /// Every pass dwells tau_0 per cell; intervals accumulate across passes.
    ConstantSpeed,
    /// Round i dwells tau_0 * c^i per cell with fresh per-round samples (the
    /// variant the theory analyzes).
    Doubling,
}

/// Uniform raster search: same path, same stopping criterion, no adaptivity.
pub fn run_naivesearch(
    env: &EnvironmentMap,
    cfg: &RunConfig,
    mode: NaiveMode,
    rng: &mut ChaCha8Rng,
) -> Result<TrialReport, RunError> {
    cfg.validate()?;
    let n = env.n_cells();
    let path = raster_path(&env.grid);
    let all_cells: BTreeSet<usize> = (0..n).collect();
    let mut run_cfg = cfg.clone();
    run_cfg.sampling = match mode {
        NaiveMode::ConstantSpeed => crate::trial::SamplingMode::Cumulative,
        NaiveMode::Doubling => crate::trial::SamplingMode::Fresh,
    };
    let mut state = EliminationState::new(n, env.k, cfg.delta_total);
    let mut tracker = MeasurementTracker::new(env, &run_cfg, &path)?;
    let mut inst = TrialInstruments::new(env, &run_cfg);

    for round in 0..cfg.max_rounds {
        let tau_i = match mode {
            NaiveMode::ConstantSpeed => cfg.tau_0,
            NaiveMode::Doubling => cfg.tau_0 * cfg.growth.powi(round as i32),
        };
        let delta_i = round_delta(cfg.delta_total, n, round.max(1))?;
        let schedule = round_schedule(&path, &all_cells, cfg.tau_0, tau_i, round)?;

        tracker.collect_round(env, &schedule, &all_cells, rng)?;
        inst.sim_time += schedule.total_time;
        inst.sample_time += tau_i * n as f64;

        let intervals = tracker.intervals(&all_cells, delta_i)?;
        inst.observe_coverage(env, &intervals);

        // Bookkeeping only: the schedule above stays uniform regardless.
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

        match check_termination(&state, &intervals, &cfg.rule, StoppingMode::OrderStatistic)? {
            Decision::Done(set) => return Ok(finish_report(env, cfg, set, round + 1, inst)),
            Decision::Continue => {}
        }
    }
    Err(RunError::MaxRounds {
        max_rounds: cfg.max_rounds,
        partial: Box::new(mark_aborted(finish_report(
            env,
            cfg,
            state.confirmed.clone(),
            cfg.max_rounds,
            inst,
        ))),
    })
}

/// Axis-aligned flight volume for trajectory planning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl FlightBox {
    /// Box over the grid footprint, from the sensor altitude up to two cell
    /// widths above it.
    pub fn over_grid(grid: &GridSpec) -> Self {
        FlightBox {
            min: [grid.origin[0], grid.origin[1], grid.sensor_altitude],
            max: [
                grid.origin[0] + grid.cols as f64 * grid.cell_size,
                grid.origin[1] + grid.rows as f64 * grid.cell_size,
                grid.sensor_altitude + 2.0 * grid.cell_size,
            ],
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| self.min[i] - 1e-9 <= p[i] && p[i] <= self.max[i] + 1e-9)
    }

    pub fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        let mut q = p;
        for i in 0..3 {
            q[i] = q[i].clamp(self.min[i], self.max[i]);
        }
        q
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let mut p = [0.0; 3];
        for i in 0..3 {
            p[i] = self.min[i] + rng.random::<f64>() * (self.max[i] - self.min[i]);
        }
        p
    }

    pub fn extent(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).fold(0.0, f64::max)
    }
}

/// Second-order Bezier curve over a planning horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierTrajectory {
    pub control: [[f64; 3]; 3],
    pub duration: f64,
}

impl BezierTrajectory {
    pub fn new(control: [[f64; 3]; 3], duration: f64, bbox: &FlightBox) -> Result<Self, RunError> {
        if !(duration > 0.0) {
            return Err(RunError::InvalidConfig(format!(
                "trajectory duration must be > 0, got {duration}"
            )));
        }
        if control.iter().any(|p| !bbox.contains(*p)) {
            return Err(RunError::InvalidConfig(
                "trajectory control points leave the flight box".into(),
            ));
        }
        Ok(BezierTrajectory { control, duration })
    }

    /// Curve position at normalized time `u` in [0, 1]. Control points in
    /// the box keep the curve in the box (convex hull property).
    pub fn eval(&self, u: f64) -> [f64; 3] {
        let [p0, p1, p2] = self.control;
        let a = (1.0 - u) * (1.0 - u);
        let b = 2.0 * u * (1.0 - u);
        let c = u * u;
        [
            a * p0[0] + b * p1[0] + c * p2[0],
            a * p0[1] + b * p1[1] + c * p2[1],
            a * p0[2] + b * p1[2] + c * p2[2],
        ]
    }

    /// Polyline arc-length approximation.
    pub fn arc_length(&self, segments: usize) -> f64 {
        let mut len = 0.0;
        let mut prev = self.eval(0.0);
        for s in 1..=segments {
            let cur = self.eval(s as f64 / segments as f64);
            len += dist(prev, cur);
            prev = cur;
        }
        len
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Receding-horizon planner settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InfoMaxConfig {
    /// Planning horizon per cycle, seconds.
    pub t_plan: f64,
    /// Evenly spaced evaluation times along each candidate trajectory.
    pub n_samples: usize,
    pub restarts: usize,
    pub local_steps: usize,
    /// Top speed; trajectories longer than v_max * t_plan are infeasible.
    /// Defaults to cell_size / tau_0 when unset.
    pub v_max: Option<f64>,
    /// Simulated-time guard.
    pub max_sim_time: f64,
}

impl Default for InfoMaxConfig {
    fn default() -> Self {
        InfoMaxConfig {
            t_plan: 30.0,
            n_samples: 10,
            restarts: 64,
            local_steps: 12,
            v_max: None,
            max_sim_time: 20_000.0,
        }
    }
}

impl InfoMaxConfig {
    fn validate(&self) -> Result<(), RunError> {
        if !(self.t_plan > 0.0) || self.n_samples < 2 {
            return Err(RunError::InvalidConfig(
                "infomax needs t_plan > 0 and n_samples >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Sensitivity-weighted posterior variance accumulated at `n_samples`
/// evenly spaced times along the trajectory.
pub fn infomax_objective(
    posterior: &PosteriorSummary,
    model: &SensitivityModel,
    grid: &GridSpec,
    traj: &BezierTrajectory,
    n_samples: usize,
) -> Result<f64, RunError> {
    let mut score = 0.0;
    for s in 1..=n_samples {
        let u = s as f64 / n_samples as f64;
        let pos = traj.eval(u);
        let z = SensingConfig { position: pos, cell_index: 0 };
        for (j, sigma) in posterior.sigma_diag.iter().enumerate() {
            score += sigma * sensitivity(model, grid, j, &z)?;
        }
    }
    Ok(score)
}

/// Pluggable trajectory solver for the information objective.
pub trait TrajectoryOptimizer {
    fn optimize(
        &self,
        start: [f64; 3],
        bbox: &FlightBox,
        t_plan: f64,
        v_max: f64,
        objective: &mut dyn FnMut(&BezierTrajectory) -> f64,
        rng: &mut ChaCha8Rng,
    ) -> BezierTrajectory;
}

/// Seeded random restarts followed by coordinate-descent refinement of the
/// two free control points (the first is pinned to the current position).
#[derive(Debug, Clone, Copy)]
pub struct RandomRestarts {
    pub restarts: usize,
    pub local_steps: usize,
}

impl RandomRestarts {
    /// Scale the free control points toward the start until the curve fits
    /// the speed budget. Displacement from the start is linear in the
    /// offsets, so a single rescale lands exactly on the cap.
    fn make_feasible(
        start: [f64; 3],
        mut p1: [f64; 3],
        mut p2: [f64; 3],
        t_plan: f64,
        v_max: f64,
        bbox: &FlightBox,
    ) -> BezierTrajectory {
        let budget = v_max * t_plan;
        for _ in 0..8 {
            let traj = BezierTrajectory {
                control: [start, p1, p2],
                duration: t_plan,
            };
            let len = traj.arc_length(24);
            if len <= budget {
                return traj;
            }
            let s = budget / len;
            for i in 0..3 {
                p1[i] = start[i] + s * (p1[i] - start[i]);
                p2[i] = start[i] + s * (p2[i] - start[i]);
            }
            p1 = bbox.clamp(p1);
            p2 = bbox.clamp(p2);
        }
        BezierTrajectory {
            control: [start, start, start],
            duration: t_plan,
        }
    }
}

impl TrajectoryOptimizer for RandomRestarts {
    fn optimize(
        &self,
        start: [f64; 3],
        bbox: &FlightBox,
        t_plan: f64,
        v_max: f64,
        objective: &mut dyn FnMut(&BezierTrajectory) -> f64,
        rng: &mut ChaCha8Rng,
    ) -> BezierTrajectory {
        let start = bbox.clamp(start);
        let mut best = Self::make_feasible(start, start, start, t_plan, v_max, bbox);
        let mut best_score = objective(&best);
        for _ in 0..self.restarts {
            let cand = Self::make_feasible(
                start,
                bbox.sample(rng),
                bbox.sample(rng),
                t_plan,
                v_max,
                bbox,
            );
            let score = objective(&cand);
            if score > best_score {
                best = cand;
                best_score = score;
            }
        }
        // Coordinate descent on the 6 free coordinates.
        let mut step = bbox.extent() / 8.0;
        for _ in 0..self.local_steps {
            let mut improved = false;
            for point in 1..3 {
                for axis in 0..3 {
                    for dir in [1.0, -1.0] {
                        let mut control = best.control;
                        control[point][axis] += dir * step;
                        control[point] = bbox.clamp(control[point]);
                        let cand = Self::make_feasible(
                            start,
                            control[1],
                            control[2],
                            t_plan,
                            v_max,
                            bbox,
                        );
                        let score = objective(&cand);
                        if score > best_score {
                            best = cand;
                            best_score = score;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-3 {
                    break;
                }
            }
        }
        best
    }
}

/// Receding-horizon information maximization. Requires the physical model
/// (the objective consumes the posterior covariance diagonal).
pub fn run_infomax(
    env: &EnvironmentMap,
    cfg: &RunConfig,
    imx: &InfoMaxConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrialReport, RunError> {
    cfg.validate()?;
    imx.validate()?;
    if !cfg.model.is_physical() {
        return Err(RunError::InvalidConfig(
            "infomax requires the inverse-square sensing model".into(),
        ));
    }
    let n = env.n_cells();
    let path = raster_path(&env.grid);
    let bbox = FlightBox::over_grid(&env.grid);
    let v_max = imx.v_max.unwrap_or(env.grid.cell_size / cfg.tau_0);
    let optimizer = RandomRestarts {
        restarts: imx.restarts,
        local_steps: imx.local_steps,
    };
    let all_cells: BTreeSet<usize> = (0..n).collect();
    let mut state = EliminationState::new(n, env.k, cfg.delta_total);
    let mut tracker = MeasurementTracker::new(env, cfg, &path)?;
    let mut inst = TrialInstruments::new(env, cfg);
    let mut position = path.configs[0].position;

    let mut cycle: u32 = 0;
    loop {
        cycle += 1;
        // Planning is uninformed before any data arrives: weight all cells
        // equally on the first cycle. Later cycles reuse the posterior from
        // the previous cycle's interval solve, which covers all measurements
        // taken so far.
        let (n_meas, sigma) = {
            let phys = tracker.physical_mut().expect("physical tracker");
            (phys.n_measurements(), phys.sigma_diag().to_vec())
        };
        let posterior = if n_meas == 0 {
            PosteriorSummary {
                mu_hat: vec![0.0; n],
                sigma_diag: vec![1.0; n],
            }
        } else {
            PosteriorSummary {
                mu_hat: tracker.estimates().to_vec(),
                sigma_diag: sigma,
            }
        };
        let mut objective = |traj: &BezierTrajectory| {
            infomax_objective(&posterior, &cfg.model, &env.grid, traj, imx.n_samples)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let traj = optimizer.optimize(position, &bbox, imx.t_plan, v_max, &mut objective, rng);

        // Fly the trajectory, measuring every sub_dt seconds. Planning time
        // itself is not charged against simulated time.
        let steps = (imx.t_plan / cfg.sub_dt).round().max(1.0) as usize;
        let dt = imx.t_plan / steps as f64;
        let phys = tracker.physical_mut().expect("physical tracker");
        for s in 1..=steps {
            let pos = traj.eval(s as f64 / steps as f64);
            phys.observe_free(env, &cfg.model, pos, dt, rng)?;
            inst.sim_time += dt;
        }
        inst.sample_time += imx.t_plan;
        position = traj.eval(1.0);

        let delta_i = round_delta(cfg.delta_total, n, cycle)?;
        let intervals = tracker.intervals(&all_cells, delta_i)?;
        inst.observe_coverage(env, &intervals);

        let confirmed = top_elim(&state.candidates, &state.confirmed, state.k, &intervals)?;
        let candidates = bot_elim(&state.candidates, &confirmed, state.k, &intervals)?;
        state.confirmed = confirmed;
        state.candidates = candidates;
        state.round = cycle - 1;

        inst.observe_sets(cycle - 1, &state.candidates, &state.confirmed);
        inst.record_metrics(env, tracker.estimates());
        inst.round_log.push(RoundLog {
            round: cycle - 1,
            n_candidates: state.candidates.len(),
            n_confirmed: state.confirmed.len(),
            tau_i: imx.t_plan,
            sim_time: inst.sim_time,
        });

        match check_termination(&state, &intervals, &cfg.rule, StoppingMode::OrderStatistic)? {
            Decision::Done(set) => return Ok(finish_report(env, cfg, set, cycle, inst)),
            Decision::Continue => {}
        }
        if inst.sim_time >= imx.max_sim_time {
            return Err(RunError::SimTime {
                limit: imx.max_sim_time,
                partial: Box::new(mark_aborted(finish_report(
                    env,
                    cfg,
                    state.confirmed.clone(),
                    cycle,
                    inst,
                ))),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentMap, GridSpec, RngSeed};

    fn box_and_grid() -> (GridSpec, FlightBox) {
        let grid = GridSpec::new(3, 3, 4.0, 2.0).unwrap();
        let bbox = FlightBox::over_grid(&grid);
        (grid, bbox)
    }

    #[test]
    fn bezier_endpoints_and_hull() {
        let (_, bbox) = box_and_grid();
        let traj = BezierTrajectory::new(
            [[0.0, 0.0, 2.0], [6.0, 6.0, 4.0], [12.0, 12.0, 2.0]],
            30.0,
            &bbox,
        )
        .unwrap();
        assert_eq!(traj.eval(0.0), [0.0, 0.0, 2.0]);
        assert_eq!(traj.eval(1.0), [12.0, 12.0, 2.0]);
        for s in 0..=16 {
            assert!(bbox.contains(traj.eval(s as f64 / 16.0)));
        }
        let outside = BezierTrajectory::new(
            [[0.0, 0.0, 2.0], [100.0, 0.0, 2.0], [12.0, 12.0, 2.0]],
            30.0,
            &bbox,
        );
        assert!(outside.is_err());
    }

    #[test]
    fn objective_zero_when_variance_zero() {
        let (grid, bbox) = box_and_grid();
        let posterior = PosteriorSummary {
            mu_hat: vec![0.0; 9],
            sigma_diag: vec![0.0; 9],
        };
        let traj = BezierTrajectory::new(
            [[2.0, 2.0, 2.0], [6.0, 6.0, 3.0], [10.0, 10.0, 2.0]],
            30.0,
            &bbox,
        )
        .unwrap();
        let score = infomax_objective(
            &posterior,
            &SensitivityModel::inverse_square(),
            &grid,
            &traj,
            8,
        )
        .unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn objective_hovering_hand_value() {
        // Single cell, sigma = 1, c = 1, hovering 2m above it, N = 4:
        // score = 4 * 0.25.
        let grid = GridSpec::new(1, 1, 4.0, 2.0).unwrap();
        let bbox = FlightBox::over_grid(&grid);
        let above = grid.sensor_above(0);
        let posterior = PosteriorSummary {
            mu_hat: vec![0.0],
            sigma_diag: vec![1.0],
        };
        let traj = BezierTrajectory::new([above, above, above], 30.0, &bbox).unwrap();
        let score = infomax_objective(
            &posterior,
            &SensitivityModel::inverse_square(),
            &grid,
            &traj,
            4,
        )
        .unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn objective_invariant_under_cell_relabeling() {
        // Permuting which grid cell carries which variance must not change
        // the score when the permutation is a symmetry of the geometry.
        let (grid, bbox) = box_and_grid();
        let model = SensitivityModel::inverse_square();
        let center = [6.0, 6.0, 3.0];
        let traj = BezierTrajectory::new([center, center, center], 30.0, &bbox).unwrap();
        // 180-degree rotation about the grid center maps cell i to 8 - i and
        // fixes the hover point.
        let sigma: Vec<f64> = (0..9).map(|i| 1.0 + i as f64).collect();
        let rotated: Vec<f64> = (0..9).map(|i| sigma[8 - i]).collect();
        let score = |s: &Vec<f64>| {
            infomax_objective(
                &PosteriorSummary { mu_hat: vec![0.0; 9], sigma_diag: s.clone() },
                &model,
                &grid,
                &traj,
                6,
            )
            .unwrap()
        };
        assert!((score(&sigma) - score(&rotated)).abs() < 1e-9);
    }

    #[test]
    fn optimizer_prefers_high_variance_region() {
        let (grid, bbox) = box_and_grid();
        let model = SensitivityModel::inverse_square();
        // All uncertainty sits in cell 8 (top-right corner).
        let mut sigma = vec![0.0; 9];
        sigma[8] = 1.0;
        let posterior = PosteriorSummary { mu_hat: vec![0.0; 9], sigma_diag: sigma };
        let mut objective = |traj: &BezierTrajectory| {
            infomax_objective(&posterior, &model, &grid, traj, 10).unwrap()
        };
        let opt = RandomRestarts { restarts: 64, local_steps: 12 };
        let mut rng = RngSeed(5).stream(&[77]);
        let start = [2.0, 2.0, 2.0];
        let traj = opt.optimize(start, &bbox, 30.0, 4.0, &mut objective, &mut rng);
        let target = grid.sensor_above(8);
        let end = traj.eval(1.0);
        let d_end = dist(end, target);
        let d_start = dist(start, target);
        assert!(d_end < d_start * 0.5, "end {end:?} not drawn toward {target:?}");
    }

    #[test]
    fn optimizer_is_deterministic() {
        let (grid, bbox) = box_and_grid();
        let model = SensitivityModel::inverse_square();
        let posterior = PosteriorSummary {
            mu_hat: vec![0.0; 9],
            sigma_diag: (0..9).map(|i| (i as f64 + 1.0) / 9.0).collect(),
        };
        let run = || {
            let mut objective = |traj: &BezierTrajectory| {
                infomax_objective(&posterior, &model, &grid, traj, 10).unwrap()
            };
            let opt = RandomRestarts { restarts: 16, local_steps: 6 };
            let mut rng = RngSeed(9).stream(&[78]);
            opt.optimize([2.0, 2.0, 2.0], &bbox, 30.0, 4.0, &mut objective, &mut rng)
        };
        assert_eq!(run().control, run().control);
    }

    #[test]
    fn feasibility_rescale_respects_speed_cap() {
        let (_, bbox) = box_and_grid();
        let start = [0.0, 0.0, 2.0];
        let traj = RandomRestarts::make_feasible(
            start,
            [12.0, 0.0, 2.0],
            [12.0, 12.0, 2.0],
            2.0,
            1.0,
            &bbox,
        );
        assert!(traj.arc_length(24) <= 2.0 + 1e-9);
        assert_eq!(traj.eval(0.0), start);
    }

    #[test]
    fn infomax_hovers_on_degenerate_grid() {
        let grid = GridSpec::new(1, 1, 4.0, 2.0).unwrap();
        let env = EnvironmentMap::from_rates(grid, vec![50.0], 1).unwrap();
        let mut cfg = RunConfig::new(SensitivityModel::inverse_square());
        cfg.z_alpha = Some(1e-4);
        let mut rng = RngSeed(3).stream(&[79]);
        let report = run_infomax(&env, &cfg, &InfoMaxConfig::default(), &mut rng).unwrap();
        assert_eq!(report.returned_set, BTreeSet::from([0]));
        assert!(report.correct);
        assert_eq!(report.rounds, 1);
    }

    #[test]
    fn infomax_rejects_pointwise_model() {
        let grid = GridSpec::new(2, 2, 4.0, 2.0).unwrap();
        let env = EnvironmentMap::from_rates(grid, vec![1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let cfg = RunConfig::new(SensitivityModel::Pointwise);
        let mut rng = RngSeed(3).stream(&[80]);
        assert!(matches!(
            run_infomax(&env, &cfg, &InfoMaxConfig::default(), &mut rng),
            Err(RunError::InvalidConfig(_))
        ));
    }
}
