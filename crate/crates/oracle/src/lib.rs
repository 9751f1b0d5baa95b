//! Brute-force reference implementations used only by test suites: a dense
//! one-shot least-squares solve, a literal full-sort transcription of the
//! elimination rules, and Monte Carlo coverage checks for the Poisson
//! bounding functions.
//!
//! Nothing here shares a code path with the production crate. The least
//! squares route uses explicit normal equations and Gauss-Jordan inversion
//! (not Cholesky), and coverage draws come from `rand_distr`, not the
//! engine's sampler. Clarity over speed; intended for |S| <= 16.

use std::collections::{BTreeMap, BTreeSet};

use adasearch::confidence::{u_minus, u_plus, ubar_minus, ubar_plus, Interval};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// One-shot least squares: form `A = sum r r^T + ridge I`, `b = sum r y`,
/// invert `A` by Gauss-Jordan elimination with partial pivoting, and return
/// `(A^{-1} b, diag(A^{-1}))`.
pub fn dense_solve(
    rows: &[Vec<f64>],
    y: &[f64],
    ridge: f64,
) -> Result<(Vec<f64>, Vec<f64>), String> {
    if rows.len() != y.len() {
        return Err(format!("{} rows vs {} observations", rows.len(), y.len()));
    }
    let n = rows.first().map(|r| r.len()).ok_or("no rows")?;
    if rows.iter().any(|r| r.len() != n) {
        return Err("ragged rows".into());
    }
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (row, &obs) in rows.iter().zip(y) {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * obs;
        }
    }
    for (i, diag) in a.iter_mut().enumerate() {
        diag[i] += ridge;
    }
    let inv = invert(&a)?;
    let mu: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| inv[i][j] * b[j]).sum())
        .collect();
    let sigma: Vec<f64> = (0..n).map(|i| inv[i][i]).collect();
    Ok((mu, sigma))
}

fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, String> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| aug[r1][col].abs().partial_cmp(&aug[r2][col].abs()).unwrap())
            .unwrap();
        if aug[pivot][col].abs() < 1e-300 {
            return Err(format!("singular at column {col}"));
        }
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = aug[row][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..2 * n {
                let sub = f * aug[col][j];
                aug[row][j] -= sub;
            }
        }
    }
    Ok(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Literal transcription of the confirm/prune update rules via full sorts.
pub fn naive_elim(
    intervals: &BTreeMap<usize, Interval>,
    k: usize,
    s_top: &BTreeSet<usize>,
    candidates: &BTreeSet<usize>,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut ucbs: Vec<f64> = candidates.iter().map(|x| intervals[x].ucb).collect();
    ucbs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let j_top = k - s_top.len() + 1;
    let top_threshold = if j_top <= ucbs.len() {
        ucbs[j_top - 1]
    } else {
        f64::NEG_INFINITY
    };
    let mut new_top = s_top.clone();
    for &x in candidates {
        if intervals[&x].lcb > top_threshold {
            new_top.insert(x);
        }
    }

    let mut lcbs: Vec<f64> = candidates.iter().map(|x| intervals[x].lcb).collect();
    lcbs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let j_bot = k - new_top.len();
    let bot_threshold = if j_bot == 0 {
        f64::INFINITY
    } else if j_bot <= lcbs.len() {
        lcbs[j_bot - 1]
    } else {
        f64::NEG_INFINITY
    };
    let mut new_cand = BTreeSet::new();
    for &x in candidates {
        if !new_top.contains(&x) && intervals[&x].ucb >= bot_threshold {
            new_cand.insert(x);
        }
    }
    (new_top, new_cand)
}

/// Empirical failure rates of the bounding functions and the envelope
/// nesting over `n_draws` Poisson(mu) samples, with the binomial sigma for
/// a rate-`delta` event.
#[derive(Debug, Clone, Copy)]
pub struct CoverageRates {
    pub upper_fail: f64,
    pub lower_fail: f64,
    pub envelope_fail: f64,
    pub sigma: f64,
}

pub fn mc_coverage<R: Rng>(mu: f64, delta: f64, n_draws: usize, rng: &mut R) -> CoverageRates {
    assert!(n_draws >= 10_000, "coverage checks need >= 1e4 draws");
    let mut upper = 0usize;
    let mut lower = 0usize;
    let mut envelope = 0usize;
    let ubar_p = ubar_plus(mu, delta).unwrap();
    let ubar_m = ubar_minus(mu, delta).unwrap();
    for _ in 0..n_draws {
        let n = if mu > 0.0 {
            Poisson::new(mu).unwrap().sample(rng) as u64
        } else {
            0
        };
        let up = u_plus(n, delta).unwrap();
        let um = u_minus(n, delta).unwrap();
        if mu > up {
            upper += 1;
        }
        if mu < um {
            lower += 1;
        }
        if !(ubar_m <= um && um <= mu && mu <= up && up <= ubar_p) {
            envelope += 1;
        }
    }
    let n = n_draws as f64;
    CoverageRates {
        upper_fail: upper as f64 / n,
        lower_fail: lower as f64 / n,
        envelope_fail: envelope as f64 / n,
        sigma: (delta * (1.0 - delta) / n).sqrt(),
    }
}

/// Direct triple-loop evaluation of the information objective.
pub fn brute_force_infomax(
    sigma_diag: &[f64],
    model: &adasearch::sensing::SensitivityModel,
    grid: &adasearch::env::GridSpec,
    traj: &adasearch::baselines::BezierTrajectory,
    n_samples: usize,
) -> f64 {
    let mut total = 0.0;
    for i in 1..=n_samples {
        let pos = traj.eval(i as f64 / n_samples as f64);
        for (j, sig) in sigma_diag.iter().enumerate() {
            let z = adasearch::sensing::SensingConfig { position: pos, cell_index: 0 };
            total += sig * adasearch::sensing::sensitivity(model, grid, j, &z).unwrap();
        }
    }
    total
}
