//! Ground-truth environments: grid geometry, emitter rates, random instance
//! generation, and Poisson count sampling.
//!
//! Cells are indexed row-major from the origin. An environment is immutable
//! after construction and safe to share across trials; each trial owns a
//! private RNG stream derived from `(seed, trial_index)`.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean threshold below which Poisson sampling uses inversion by sequential
/// search; above it, transformed rejection (PTRS). Both are exact.
const POISSON_INVERSION_CUTOFF: f64 = 30.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-identifiable config: {0}")]
    NonIdentifiable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Seed for a reproducible RNG stream. Identical seed and configuration give
/// a bit-identical trial trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derive a child seed by mixing tag words in. Distinct `(seed, tags)`
    /// combinations map to well-separated values via splitmix64 steps.
    pub fn child(self, tags: &[u64]) -> RngSeed {
        let mut state = self.0;
        for &t in tags {
            state = splitmix64(state ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        RngSeed(state)
    }

    /// Derive a child RNG stream.
    pub fn stream(self, tags: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.child(tags).0))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Planar grid geometry. Cell centers sit at
/// `origin + (col + 0.5, row + 0.5) * cell_size` on the ground plane; the
/// sensor flies at `sensor_altitude` above them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    pub sensor_altitude: f64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, cell_size: f64, altitude: f64) -> Result<Self, EnvError> {
        let grid = GridSpec {
            rows,
            cols,
            cell_size,
            origin: [0.0, 0.0],
            sensor_altitude: altitude,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(EnvError::InvalidConfig("grid must have rows, cols >= 1".into()));
        }
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(EnvError::InvalidConfig("cell_size must be positive".into()));
        }
        if !(self.sensor_altitude > 0.0) || !self.sensor_altitude.is_finite() {
            return Err(EnvError::InvalidConfig("sensor_altitude must be positive".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major cell index for `(row, col)`.
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Ground-plane center of a cell (altitude 0).
    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let row = idx / self.cols;
        let col = idx % self.cols;
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
            0.0,
        ]
    }

    /// Sensor position directly above a cell center.
    pub fn sensor_above(&self, idx: usize) -> [f64; 3] {
        let mut p = self.cell_center(idx);
        p[2] = self.sensor_altitude;
        p
    }
}

/// Ground-truth emission rates on a grid, with the target count `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMap {
    pub grid: GridSpec,
    /// Row-major emission rates in counts/second.
    pub mu: Vec<f64>,
    pub k: usize,
    /// Seed used to build the instance (0 for hand-built environments).
    pub seed: u64,
}

impl EnvironmentMap {
    /// Build an environment from explicit rates, validating shape and
    /// finiteness. Identifiability (strict separation at the k-th rate) is
    /// checked lazily by [`true_top_k`].
    pub fn from_rates(grid: GridSpec, mu: Vec<f64>, k: usize) -> Result<Self, EnvError> {
        grid.validate()?;
        if mu.len() != grid.n_cells() {
            return Err(EnvError::InvalidConfig(format!(
                "mu has {} entries for a grid of {} cells",
                mu.len(),
                grid.n_cells()
            )));
        }
        if k == 0 || k > grid.n_cells() {
            return Err(EnvError::InvalidConfig(format!(
                "k = {k} must lie in 1..={}",
                grid.n_cells()
            )));
        }
        if mu.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(EnvError::InvalidConfig("all rates must be finite and >= 0".into()));
        }
        Ok(EnvironmentMap { grid, mu, k, seed: 0 })
    }

    pub fn n_cells(&self) -> usize {
        self.mu.len()
    }

    /// Rate of the cell with the j-th largest emission (1-indexed).
    pub fn rate_order_stat(&self, j: usize) -> Option<f64> {
        if j == 0 || j > self.mu.len() {
            return None;
        }
        let mut sorted = self.mu.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Some(sorted[j - 1])
    }

    /// Whether the k-th and (k+1)-th largest rates are strictly separated.
    pub fn is_identifiable(&self) -> bool {
        if self.k == self.mu.len() {
            return true;
        }
        let mu_k = self.rate_order_stat(self.k).unwrap();
        let mu_k1 = self.rate_order_stat(self.k + 1).unwrap();
        mu_k > mu_k1
    }

    /// Stable 64-bit content hash over geometry, rates, and k. Used by the
    /// harness to verify matched-seed discipline across algorithms.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        mix(&(self.grid.rows as u64).to_le_bytes());
        mix(&(self.grid.cols as u64).to_le_bytes());
        mix(&self.grid.cell_size.to_bits().to_le_bytes());
        mix(&self.grid.sensor_altitude.to_bits().to_le_bytes());
        mix(&(self.k as u64).to_le_bytes());
        for m in &self.mu {
            mix(&m.to_bits().to_le_bytes());
        }
        h
    }
}

/// Build a random instance: `k` distinct cells (chosen by a seeded
/// Fisher-Yates pass) receive `source_rates`; every other cell draws an
/// i.i.d. Uniform[0, mu_bar] background rate.
pub fn build_random_env(
    seed: RngSeed,
    grid: GridSpec,
    k: usize,
    source_rates: &[f64],
    mu_bar: f64,
) -> Result<EnvironmentMap, EnvError> {
    grid.validate()?;
    let n = grid.n_cells();
    if k == 0 || k > n {
        return Err(EnvError::InvalidConfig(format!("k = {k} must lie in 1..={n}")));
    }
    if source_rates.len() != k {
        return Err(EnvError::InvalidConfig(format!(
            "expected {k} source rates, got {}",
            source_rates.len()
        )));
    }
    if !(mu_bar >= 0.0) || !mu_bar.is_finite() {
        return Err(EnvError::InvalidConfig("mu_bar must be finite and >= 0".into()));
    }
    let min_source = source_rates.iter().cloned().fold(f64::INFINITY, f64::min);
    if source_rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(EnvError::InvalidConfig("source rates must be finite and >= 0".into()));
    }
    if k < n && min_source <= mu_bar {
        return Err(EnvError::NonIdentifiable(format!(
            "min source rate {min_source} must exceed mu_bar {mu_bar}"
        )));
    }

    let mut rng = seed.stream(&[0x656e76]); // env-generation stream
    let mut cells: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        cells.swap(i, j);
    }
    let mut mu = vec![0.0; n];
    let sources: BTreeSet<usize> = cells[..k].iter().copied().collect();
    for (slot, &cell) in cells[..k].iter().enumerate() {
        mu[cell] = source_rates[slot];
    }
    for (cell, rate) in mu.iter_mut().enumerate() {
        if !sources.contains(&cell) {
            *rate = rng.random_range(0.0..=1.0) * mu_bar;
        }
    }
    Ok(EnvironmentMap { grid, mu, k, seed: seed.0 })
}

/// The true top-k set S*(k): indices of the k cells with largest rates.
/// Errors if the k/(k+1) boundary is tied (the instance is not identifiable).
pub fn true_top_k(env: &EnvironmentMap) -> Result<BTreeSet<usize>, EnvError> {
    let n = env.n_cells();
    let k = env.k;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| env.mu[b].partial_cmp(&env.mu[a]).unwrap().then(a.cmp(&b)));
    if k < n && env.mu[order[k - 1]] <= env.mu[order[k]] {
        return Err(EnvError::NonIdentifiable(format!(
            "rates tie at the k/(k+1) boundary: {} vs {}",
            env.mu[order[k - 1]],
            env.mu[order[k]]
        )));
    }
    Ok(order[..k].iter().copied().collect())
}

/// Draw the photon count observed over `duration` seconds from a source of
/// the given rate: Poisson(rate * duration). A zero mean returns 0
/// deterministically without consuming randomness.
pub fn sample_counts<R: Rng + ?Sized>(rng: &mut R, rate: f64, duration: f64) -> Result<u64, EnvError> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(EnvError::InvalidArgument(format!("rate {rate} must be finite and >= 0")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(EnvError::InvalidArgument(format!(
            "duration {duration} must be finite and >= 0"
        )));
    }
    let mean = rate * duration;
    if mean == 0.0 {
        return Ok(0);
    }
    Ok(sample_poisson(rng, mean))
}

/// Exact Poisson sampling: inversion by sequential search below
/// [`POISSON_INVERSION_CUTOFF`], transformed rejection (PTRS) above.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    debug_assert!(mean > 0.0 && mean.is_finite());
    if mean < POISSON_INVERSION_CUTOFF {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        // Guard against the vanishing tail mass beyond f64 resolution.
        if p < f64::MIN_POSITIVE && cdf < u {
            break;
        }
    }
    k
}

/// Hoermann's PTRS transformed-rejection sampler, exact for mean >= 10.
fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let b = 0.931 + 2.53 * mean.sqrt();
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let ln_mu = mean.ln();
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        let rhs = k * ln_mu - mean - statrs::function::gamma::ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
