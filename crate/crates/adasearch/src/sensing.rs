//! Sensitivity models, aggregate observed rates, and measurement generation.
//!
//! The pointwise model reads a single cell in isolation; the inverse-square
//! model weights every emitter by `c / ||x - z||^2`. Emitters live on the
//! ground plane (altitude 0) while sensing configurations sit at the grid's
//! sensor altitude, so the distance is bounded away from zero whenever the
//! geometry is valid.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{sample_counts, EnvError, EnvironmentMap, GridSpec};

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("singular geometry: sensing configuration coincides with emitter {0}")]
    SingularGeometry(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// A sensor pose. `position` is semantic for the inverse-square model,
/// `cell_index` for the pointwise model; both are always stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub position: [f64; 3],
    pub cell_index: usize,
}

impl SensingConfig {
    /// The configuration directly above a cell at the grid's sensor altitude.
    pub fn above_cell(grid: &GridSpec, cell: usize) -> Self {
        SensingConfig {
            position: grid.sensor_above(cell),
            cell_index: cell,
        }
    }
}

/// Sensitivity model h(x, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityModel {
    /// Indicator sensitivity: 1 iff the sensor sits over cell x.
    Pointwise,
    /// Inverse-square law with sensor constant `c` (m^2).
    InverseSquare { c: f64 },
}

impl SensitivityModel {
    pub fn inverse_square() -> Self {
        SensitivityModel::InverseSquare { c: 1.0 }
    }

    pub fn is_physical(&self) -> bool {
        matches!(self, SensitivityModel::InverseSquare { .. })
    }
}

/// One sensor reading: a Poisson count collected over `duration` seconds at
/// a configuration, stamped with the round and simulated time it was taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub config: SensingConfig,
    pub duration: f64,
    pub count: u64,
    pub round: u32,
    pub time_stamp: f64,
}

/// Sensitivity of emitter `x` to a sensor at `z`.
pub fn sensitivity(
    model: &SensitivityModel,
    grid: &GridSpec,
    x: usize,
    z: &SensingConfig,
) -> Result<f64, SensingError> {
    if x >= grid.n_cells() {
        return Err(SensingError::InvalidArgument(format!(
            "cell index {x} out of range for {} cells",
            grid.n_cells()
        )));
    }
    match model {
        SensitivityModel::Pointwise => Ok(if z.cell_index == x { 1.0 } else { 0.0 }),
        SensitivityModel::InverseSquare { c } => {
            if !(*c > 0.0) {
                return Err(SensingError::InvalidArgument(format!(
                    "inverse-square constant must be > 0, got {c}"
                )));
            }
            let p = grid.cell_center(x);
            let d2 = (p[0] - z.position[0]).powi(2)
                + (p[1] - z.position[1]).powi(2)
                + (p[2] - z.position[2]).powi(2);
            if d2 == 0.0 {
                return Err(SensingError::SingularGeometry(x));
            }
            Ok(c / d2)
        }
    }
}

/// Total observed rate at `z`: the sensitivity-weighted sum of all emitters.
pub fn aggregate_rate(
    env: &EnvironmentMap,
    model: &SensitivityModel,
    z: &SensingConfig,
) -> Result<f64, SensingError> {
    match model {
        // The indicator collapses the sum to a single cell.
        SensitivityModel::Pointwise => {
            if z.cell_index >= env.n_cells() {
                return Err(SensingError::InvalidArgument(format!(
                    "cell index {} out of range",
                    z.cell_index
                )));
            }
            Ok(env.mu[z.cell_index])
        }
        SensitivityModel::InverseSquare { .. } => {
            let mut total = 0.0;
            for x in 0..env.n_cells() {
                total += sensitivity(model, &env.grid, x, z)? * env.mu[x];
            }
            Ok(total)
        }
    }
}

/// The sensitivity column for one configuration: `h(x, z)` for every cell.
pub fn sensitivity_column(
    env: &EnvironmentMap,
    model: &SensitivityModel,
    z: &SensingConfig,
) -> Result<Vec<f64>, SensingError> {
    (0..env.n_cells())
        .map(|x| sensitivity(model, &env.grid, x, z))
        .collect()
}

/// Draw one measurement of the given duration at `z`.
pub fn observe<R: Rng + ?Sized>(
    rng: &mut R,
    env: &EnvironmentMap,
    model: &SensitivityModel,
    z: &SensingConfig,
    duration: f64,
) -> Result<MeasurementRecord, SensingError> {
    observe_at(rng, env, model, z, duration, 0, 0.0)
}

/// [`observe`] with an explicit round index and simulated time stamp.
pub fn observe_at<R: Rng + ?Sized>(
    rng: &mut R,
    env: &EnvironmentMap,
    model: &SensitivityModel,
    z: &SensingConfig,
    duration: f64,
    round: u32,
    time_stamp: f64,
) -> Result<MeasurementRecord, SensingError> {
    if !(duration > 0.0) {
        return Err(SensingError::InvalidArgument(format!(
            "duration must be > 0, got {duration}"
        )));
    }
    let rate = aggregate_rate(env, model, z)?;
    let count = sample_counts(rng, rate, duration)?;
    Ok(MeasurementRecord {
        config: *z,
        duration,
        count,
        round,
        time_stamp,
    })
}

/// The |S| x |configs| sensitivity matrix with its numerical rank and the
/// condition number of H * H^T.
#[derive(Debug, Clone)]
pub struct SensitivityMatrix {
    pub h: DMatrix<f64>,
    pub rank: usize,
    pub condition: f64,
    pub rank_deficient: bool,
}

pub fn sensitivity_matrix(
    env: &EnvironmentMap,
    configs: &[SensingConfig],
    model: &SensitivityModel,
) -> Result<SensitivityMatrix, SensingError> {
    if configs.is_empty() {
        return Err(SensingError::InvalidArgument("configs must be nonempty".into()));
    }
    let n = env.n_cells();
    let m = configs.len();
    let mut h = DMatrix::zeros(n, m);
    for (j, z) in configs.iter().enumerate() {
        for i in 0..n {
            h[(i, j)] = sensitivity(model, &env.grid, i, z)?;
        }
    }
    let gram = &h * h.transpose();
    let svd = gram.svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = sigma_max * n as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if rank == n && sigma_min > 0.0 {
        sigma_max / sigma_min
    } else {
        f64::INFINITY
    };
    Ok(SensitivityMatrix {
        h,
        rank,
        condition,
        rank_deficient: rank < n,
    })
}
