//! Raster path generation and per-round dwell scheduling with exact
//! simulated-runtime accounting.
//!
//! The path is a row-by-row serpentine over all cells; speed changes are
//! instantaneous and travel time is folded into the per-cell dwell, so a
//! round costs exactly `tau_i * |S_i| + tau_0 * (|S| - |S_i|)` seconds.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::env::GridSpec;
use crate::sensing::SensingConfig;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid dwell: tau_i = {tau_i} must satisfy tau_i >= tau_0 = {tau_0} > 0")]
    InvalidDwell { tau_0: f64, tau_i: f64 },
    #[error("candidate cell {0} is outside the path")]
    UnknownCell(usize),
}

/// Serpentine coverage path visiting every cell exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterPath {
    pub configs: Vec<SensingConfig>,
}

impl RasterPath {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Build the raster path: row 0 left to right, row 1 right to left, and so
/// on, with configurations lifted to the sensor altitude above cell centers.
pub fn raster_path(grid: &GridSpec) -> RasterPath {
    let mut configs = Vec::with_capacity(grid.n_cells());
    for row in 0..grid.rows {
        let cols: Vec<usize> = if row % 2 == 0 {
            (0..grid.cols).collect()
        } else {
            (0..grid.cols).rev().collect()
        };
        for col in cols {
            configs.push(SensingConfig::above_cell(grid, grid.index(row, col)));
        }
    }
    RasterPath { configs }
}

/// Per-config dwell times for one round: `tau_i` over candidate cells,
/// `tau_0` everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellSchedule {
    pub dwell: Vec<f64>,
    pub round: u32,
    /// Round time for the adaptive schedule.
    pub total_time: f64,
    /// Round time if every cell dwelt `tau_i` (the uniform schedule).
    pub naive_total: f64,
}

pub fn round_schedule(
    path: &RasterPath,
    candidates: &BTreeSet<usize>,
    tau_0: f64,
    tau_i: f64,
    round: u32,
) -> Result<DwellSchedule, PlannerError> {
    if !(tau_0 > 0.0) || tau_i < tau_0 {
        return Err(PlannerError::InvalidDwell { tau_0, tau_i });
    }
    let n = path.len();
    if let Some(&bad) = candidates.iter().find(|&&c| c >= n) {
        return Err(PlannerError::UnknownCell(bad));
    }
    let dwell: Vec<f64> = path
        .configs
        .iter()
        .map(|z| if candidates.contains(&z.cell_index) { tau_i } else { tau_0 })
        .collect();
    let slow = candidates.len();
    let total_time = tau_i * slow as f64 + tau_0 * (n - slow) as f64;
    Ok(DwellSchedule {
        dwell,
        round,
        total_time,
        naive_total: tau_i * n as f64,
    })
}

/// Rows of `(step, x, y, z, dwell)` for CSV export of a scheduled path.
pub fn path_rows(path: &RasterPath, schedule: Option<&DwellSchedule>) -> Vec<(usize, f64, f64, f64, f64)> {
    path.configs
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let dwell = schedule.map(|s| s.dwell[i]).unwrap_or(0.0);
            (i, z.position[0], z.position[1], z.position[2], dwell)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(rows: usize, cols: usize) -> GridSpec {
        GridSpec::new(rows, cols, 4.0, 2.0).unwrap()
    }

    fn grid_adjacent(g: &GridSpec, a: usize, b: usize) -> bool {
        let (ra, ca) = (a / g.cols, a % g.cols);
        let (rb, cb) = (b / g.cols, b % g.cols);
        ra.abs_diff(rb) + ca.abs_diff(cb) == 1
    }

    #[test]
    fn single_cell_path() {
        let p = raster_path(&grid(1, 1));
        assert_eq!(p.len(), 1);
        assert_eq!(p.configs[0].cell_index, 0);
    }

    #[test]
    fn two_by_two_serpentine_order() {
        let g = grid(2, 2);
        let p = raster_path(&g);
        let cells: Vec<usize> = p.configs.iter().map(|z| z.cell_index).collect();
        // (0,0), (0,1), (1,1), (1,0) in row-major indices.
        assert_eq!(cells, vec![0, 1, 3, 2]);
    }

    #[test]
    fn six_by_six_visits_all_with_adjacency() {
        let g = grid(6, 6);
        let p = raster_path(&g);
        assert_eq!(p.len(), 36);
        let mut seen = BTreeSet::new();
        for z in &p.configs {
            assert!(seen.insert(z.cell_index));
            assert_eq!(z.position[2], 2.0);
        }
        for w in p.configs.windows(2) {
            assert!(grid_adjacent(&g, w[0].cell_index, w[1].cell_index));
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let g = grid(2, 2);
        let p = raster_path(&g);
        let s = round_schedule(&p, &BTreeSet::from([0, 3]), 1.0, 2.0, 1).unwrap();
        assert_eq!(s.total_time, 2.0 * 2.0 + 2.0 * 1.0);
        assert_eq!(s.naive_total, 8.0);

        let all: BTreeSet<usize> = (0..4).collect();
        let s = round_schedule(&p, &all, 1.0, 4.0, 2).unwrap();
        assert_eq!(s.total_time, 16.0);
        assert_eq!(s.total_time, s.naive_total);

        let s = round_schedule(&p, &BTreeSet::new(), 1.0, 4.0, 0).unwrap();
        assert_eq!(s.total_time, 4.0);

        assert!(round_schedule(&p, &BTreeSet::new(), 1.0, 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn serpentine_covers_every_grid(rows in 1usize..12, cols in 1usize..12) {
            let g = grid(rows, cols);
            let p = raster_path(&g);
            prop_assert_eq!(p.len(), rows * cols);
            let seen: BTreeSet<usize> = p.configs.iter().map(|z| z.cell_index).collect();
            prop_assert_eq!(seen.len(), rows * cols);
            for w in p.configs.windows(2) {
                prop_assert!(grid_adjacent(&g, w[0].cell_index, w[1].cell_index));
            }
        }

        #[test]
        fn adaptive_round_never_slower_than_uniform(
            rows in 1usize..6, cols in 1usize..6, keep in 0usize..36, scale in 1.0f64..16.0
        ) {
            let g = grid(rows, cols);
            let p = raster_path(&g);
            let n = rows * cols;
            let candidates: BTreeSet<usize> = (0..keep.min(n)).collect();
            let s = round_schedule(&p, &candidates, 1.0, scale, 0).unwrap();
            prop_assert!(s.total_time <= s.naive_total + 1e-12);
            if candidates.len() == n {
                prop_assert!((s.total_time - s.naive_total).abs() < 1e-12);
            }
        }
    }
}
