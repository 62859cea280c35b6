//! Gershgorin repair of unstable pruned gains.
//!
//! A projected Polyak subgradient iteration on the Gershgorin radius
//! `R̄(A + BK) = maxᵢ Σⱼ |(A + BK)ᵢⱼ|` that only moves entries already in the
//! support of the pruned gain. `R̄ < 1` implies Schur stability, and `R̄` is
//! convex in `K`, so the iteration solves a convex feasibility problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{EvaluatedController, Evaluator, Gene};
use crate::lqr::{is_schur_stable, spectral_radius, Matrix};
use crate::plant::ZERO_TOL;

/// Largest Polyak step allowed.
pub const MAX_STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    /// Target Gershgorin radius `ρ*`.
    pub target: f64,
    pub max_iter: usize,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self { target: 0.95, max_iter: 200 }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0 && self.target < 1.0) {
            return Err(Error::InvalidConfig(format!("repair target must lie in (0, 1), got {}", self.target)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("repair needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepairResult {
    #[serde(skip)]
    pub gain: Matrix,
    pub initial_radius: f64,
    pub final_radius: f64,
    /// Number of subgradient updates applied.
    pub iterations: usize,
    /// The Gershgorin target `R̄ ≤ ρ*` was reached.
    pub succeeded: bool,
    pub schur_stable: bool,
}

/// Absolute row sums `Rᵢ(M)`.
pub fn gershgorin_rowsums(m: &Matrix) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v.abs()).sum()).collect()
}

/// `R̄(M)` and the first row attaining it.
pub fn gershgorin_radius(m: &Matrix) -> (f64, usize) {
    gershgorin_rowsums(m)
        .into_iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |best, (i, r)| if r > best.0 { (r, i) } else { best })
}

/// Row-major positions of the nonzero entries of `k`.
pub fn support_of(k: &Matrix) -> Vec<(usize, usize)> {
    (0..k.nrows())
        .flat_map(|u| (0..k.ncols()).map(move |j| (u, j)))
        .filter(|&(u, j)| k[(u, j)].abs() > ZERO_TOL)
        .collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Subgradient of `R̄(A + BK)` projected onto `support`:
/// `g_uj = sign((A + BK)_{i*j}) · B_{i*u}` on the support, zero elsewhere.
pub fn gershgorin_subgradient(a: &Matrix, b: &Matrix, k: &Matrix, support: &[(usize, usize)]) -> Matrix {
    let a_cl = a + b * k;
    let (_, row) = gershgorin_radius(&a_cl);
    let mut g = Matrix::zeros(k.nrows(), k.ncols());
    for &(u, j) in support {
        g[(u, j)] = sign(a_cl[(row, j)]) * b[(row, u)];
    }
    g
}

/// Polyak-step projected subgradient descent on `R̄(A + BK)` from `k_s`,
/// stopping once `R̄ ≤ ρ*`, after `max_iter` updates, or when the projected
/// subgradient vanishes.
pub fn repair_controller(a: &Matrix, b: &Matrix, k_s: &Matrix, config: &RepairConfig) -> Result<RepairResult> {
    repair_on_support(a, b, k_s, &support_of(k_s), config, |_, _| {})
}

/// Repair starting from `k_init`, moving only the entries listed in `support`.
/// `observe(iterate, unclipped)` is called after each update.
pub fn repair_on_support(
    a: &Matrix,
    b: &Matrix,
    k_init: &Matrix,
    support: &[(usize, usize)],
    config: &RepairConfig,
    mut observe: impl FnMut(&Matrix, bool),
) -> Result<RepairResult> {
    config.validate()?;
    if a.nrows() != a.ncols() || b.nrows() != a.nrows() || k_init.shape() != (b.ncols(), a.ncols()) {
        return Err(Error::Dimension("repair inputs have inconsistent shapes".into()));
    }
    if support.iter().any(|&(u, j)| u >= k_init.nrows() || j >= k_init.ncols()) {
        return Err(Error::Dimension("support entry outside the gain".into()));
    }
    let mut k = k_init.clone();
    let (initial_radius, _) = gershgorin_radius(&(a + b * &k));
    let mut radius = initial_radius;
    let mut iterations = 0;

    while iterations < config.max_iter && radius > config.target {
        let g = gershgorin_subgradient(a, b, &k, support);
        let g_norm2 = g.norm_squared();
        if g_norm2 == 0.0 {
            break;
        }
        let polyak = (radius - config.target) / g_norm2;
        let step = polyak.min(MAX_STEP);
        k -= step * g;
        iterations += 1;
        radius = gershgorin_radius(&(a + b * &k)).0;
        observe(&k, polyak <= MAX_STEP);
    }

    let succeeded = radius <= config.target;
    let schur_stable = is_schur_stable(&(a + b * &k))?;
    Ok(RepairResult { gain: k, initial_radius, final_radius: radius, iterations, succeeded, schur_stable })
}

/// Scores `K_s(θ)`; if it is unstable, scores the repaired gain instead when
/// that gain is Schur stable.
pub fn evaluate_with_repair(ev: &Evaluator, gene: &Gene, config: &RepairConfig) -> Result<EvaluatedController> {
    let plain = ev.evaluate_plain(gene)?;
    if plain.stable {
        return Ok(plain);
    }
    let result = repair_controller(&ev.problem.a, &ev.problem.b, &plain.gain, config)?;
    if !result.schur_stable {
        return Ok(plain);
    }
    let repaired = ev.score_gain(result.gain, true)?;
    Ok(if repaired.stable { repaired } else { plain })
}

/// Spectral radius of `A + BK`, for reporting.
pub fn closed_loop_radius(a: &Matrix, b: &Matrix, k: &Matrix) -> Result<f64> {
    spectral_radius(&(a + b * k))
}
