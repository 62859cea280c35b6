//! Certificates for a run: spatial decay of the dense gain, a sampled
//! gradient-Lipschitz constant, the per-link cost rate and critical
//! truncation distance, the predicted best-cost curve, and the stability
//! margin with its derived truncation depth and offspring stability bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::ea::{EaConfig, GenerationTrace, RunResult};
use crate::error::{Error, Result};
use crate::genome::{apply_masks, controller_adjacency, Evaluator, Gene};
use crate::lqr::{norm2, spectral_radius, LqrProblem, Matrix};
use crate::plant::{Distance, Partition, SystemGraph};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1.0 - 1e-6;

/// Envelope `‖[K]_ij‖ ≤ Υ ρ^{d(i,j)}` over subsystem blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub upsilon: f64,
    pub rho: f64,
    /// `(r, max block 2-norm at distance r)` for each finite distance.
    pub table: Vec<(usize, f64)>,
}

impl DecayFit {
    pub fn envelope(&self, r: usize) -> f64 {
        self.upsilon * self.rho.powi(r as i32)
    }
}

/// Block `[K]_ij`: rows owned by subsystem `i`, columns owned by `j`.
pub fn block(k: &Matrix, partition: &Partition, i: usize, j: usize) -> Matrix {
    let rows = &partition.inputs[i];
    let cols = &partition.states[j];
    Matrix::from_fn(rows.len(), cols.len(), |a, b| k[(rows[a], cols[b])])
}

/// Maximum block 2-norm per finite distance `0..=max_d`.
pub fn block_norm_table(k: &Matrix, partition: &Partition, graph: &SystemGraph) -> Vec<(usize, f64)> {
    let max_d = graph.max_finite_distance();
    let mut table: Vec<(usize, f64)> = (0..=max_d).map(|r| (r, 0.0)).collect();
    let n = partition.n_subsystems();
    for i in 0..n {
        for j in 0..n {
            if let Distance::Finite(r) = graph.distance(i, j) {
                let m = norm2(&block(k, partition, i, j));
                table[r].1 = table[r].1.max(m);
            }
        }
    }
    table
}

/// Smallest `Υ ≥ 1` making `Υ ρ^r` dominate every table entry.
fn inflate(table: &[(usize, f64)], rho: f64, floor: f64) -> f64 {
    table.iter().fold(floor.max(1.0), |u, &(r, m)| u.max(m / rho.powi(r as i32)))
}

/// Least-squares fit of `log m(r) ≈ log Υ + r log ρ`, then `Υ` raised until
/// the envelope holds on every bin.
pub fn fit_decay_table(table: Vec<(usize, f64)>) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = table.iter().filter(|(_, m)| *m > 0.0).map(|&(r, m)| (r as f64, m.ln())).collect();
    let distinct = pts.iter().map(|p| p.0 as usize).collect::<std::collections::BTreeSet<_>>().len();
    if distinct < 2 {
        return Err(Error::DegenerateTopology(format!("decay fit needs two nonempty distance bins, found {distinct}")));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rho = slope.exp().clamp(RHO_MIN, RHO_MAX);
    let upsilon = inflate(&table, rho, (my - slope * mx).exp());
    Ok(DecayFit { upsilon, rho, table })
}

pub fn fit_decay(k_dense: &Matrix, partition: &Partition, graph: &SystemGraph) -> Result<DecayFit> {
    fit_decay_table(block_norm_table(k_dense, partition, graph))
}

/// Decay constants that also bound the closed-loop transient,
/// `‖(A + BK_d)^k‖ ≤ Υ ρ^k` for every `k ≥ 0`, so that the stability margin
/// formulas hold for the actual closed loop. `ρ` is chosen on a grid above the
/// closed-loop spectral radius to maximize `σ_crit` for the given norm bound.
pub fn certified_decay(a_cl: &Matrix, spatial: &DecayFit, norm_bound: f64) -> Result<DecayFit> {
    let r_cl = spectral_radius(a_cl)?;
    if r_cl >= 1.0 {
        return Err(Error::UnstableClosedLoop(r_cl));
    }
    let mut best: Option<(f64, DecayFit)> = None;
    const GRID: usize = 24;
    for step in 1..=GRID {
        let rho = (r_cl + (1.0 - r_cl) * step as f64 / (GRID + 1) as f64).clamp(RHO_MIN, RHO_MAX);
        let Some(transient) = transient_bound(a_cl, rho) else { continue };
        let upsilon = inflate(&spatial.table, rho, transient);
        let fit = DecayFit { upsilon, rho, table: spatial.table.clone() };
        let sigma = stability_margin(norm_bound, &fit).sigma_crit;
        if best.as_ref().is_none_or(|(s, _)| sigma > *s) {
            best = Some((sigma, fit));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::InvalidConfig("no decay rate certifies the closed-loop transient".into()))
}

/// `sup_k ‖(M/ρ)^k‖₂`. Once `‖(M/ρ)^m‖ ≤ 1`, every later power is bounded
/// by an earlier one, so the scan up to `m` is exact.
fn transient_bound(m: &Matrix, rho: f64) -> Option<f64> {
    const MAX_POWERS: usize = 200_000;
    let scaled = m / rho;
    let mut power = scaled.clone();
    let mut sup = 1.0f64;
    for _ in 0..MAX_POWERS {
        let nrm = norm2(&power);
        if !nrm.is_finite() {
            return None;
        }
        if nrm <= 1.0 {
            return Some(sup);
        }
        sup = sup.max(nrm);
        power = &power * &scaled;
    }
    None
}

/// `L = max(1 + 10⁻⁹, ‖A‖, ‖B‖, ‖Q‖, ‖R‖)` in the induced 2-norm.
pub fn norm_bound(problem: &LqrProblem) -> f64 {
    [norm2(&problem.a), norm2(&problem.b), norm2(&problem.q), norm2(&problem.r)]
        .into_iter()
        .fold(1.0 + 1e-9, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub l_j: f64,
    pub samples: usize,
    pub attempts: usize,
    pub method: String,
}

pub const LIPSCHITZ_SAFETY: f64 = 1.5;
/// Perturbation radius as a fraction of `max(‖K_d‖_F, 1)`.
pub const LIPSCHITZ_RADIUS: f64 = 0.1;

/// Random stable gain around `K_d` inside `{J ≤ c J_dense}`: a Gaussian
/// direction scaled to a radius uniform on `[0, LIPSCHITZ_RADIUS·max(‖K_d‖_F, 1)]`.
pub fn sample_sublevel(problem: &LqrProblem, k_dense: &Matrix, level: f64, rng: &mut impl Rng) -> Result<Option<(Matrix, f64)>> {
    let (nu, nx) = k_dense.shape();
    let dir = Matrix::from_fn(nu, nx, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dn = dir.norm();
    if dn == 0.0 {
        return Ok(None);
    }
    let radius = rng.random::<f64>() * LIPSCHITZ_RADIUS * k_dense.norm().max(1.0);
    let k = k_dense + dir * (radius / dn);
    match problem.cost(&k)?.finite() {
        Some(j) if j <= level => Ok(Some((k, j))),
        _ => Ok(None),
    }
}

/// `L_J = 1.5 · max ‖∇J(K₁) − ∇J(K₂)‖_F / ‖K₁ − K₂‖_F` over distinct pairs of
/// `n` stable samples in the sublevel set `{J ≤ c·J_dense}` (one of them `K_d`).
pub fn estimate_lipschitz(problem: &LqrProblem, k_dense: &Matrix, j_dense: f64, c: f64, n: usize, seed: u64) -> Result<LipschitzEstimate> {
    if n < 2 {
        return Err(Error::InvalidConfig("Lipschitz estimate needs at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = c * j_dense;
    let mut samples = vec![k_dense.clone()];
    let mut attempts = 0;
    while samples.len() < n && attempts < 100 * n {
        attempts += 1;
        if let Some((k, _)) = sample_sublevel(problem, k_dense, level, &mut rng)? {
            samples.push(k);
        }
    }
    if samples.len() < 2 {
        return Err(Error::NoStableSamples(attempts));
    }
    let grads = crate::parallel::map(&samples, |k| problem.gradient(k)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut ratio = 0.0f64;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let dk = (&samples[i] - &samples[j]).norm();
            if dk > 0.0 {
                ratio = ratio.max((&grads[i] - &grads[j]).norm() / dk);
            }
        }
    }
    if ratio == 0.0 {
        return Err(Error::NoStableSamples(attempts));
    }
    Ok(LipschitzEstimate {
        l_j: LIPSCHITZ_SAFETY * ratio,
        samples: samples.len(),
        attempts,
        method: format!(
            "max pairwise gradient ratio over {} sublevel samples (c = {c}, radius {LIPSCHITZ_RADIUS}·max(‖K_d‖_F,1)) times {LIPSCHITZ_SAFETY}",
            samples.len()
        ),
    })
}

/// Per-link cost rate `Φ(h) = L_J Υ² ρ^{2h} (√(N_u N_x) + ½) / J_dense`.
pub fn cost_rate(h: usize, fit: &DecayFit, l_j: f64, j_dense: f64, n_inputs: usize, n_states: usize) -> f64 {
    l_j * fit.upsilon.powi(2) * fit.rho.powi(2 * h as i32) / j_dense * (((n_inputs * n_states) as f64).sqrt() + 0.5)
}

/// Largest depth at which the cost rate still exceeds the link reward `w_c`;
/// zero when it never does.
pub fn critical_distance(fit: &DecayFit, l_j: f64, j_dense: f64, w_c: f64, n_inputs: usize, n_states: usize) -> usize {
    let arg = l_j * fit.upsilon.powi(2) * (((n_inputs * n_states) as f64).sqrt() + 0.5) / (w_c * j_dense);
    if arg.is_nan() || arg <= 1.0 {
        return 0;
    }
    let h = (arg.ln() / (2.0 * fit.rho.ln().abs())).floor();
    if h.is_finite() {
        h as usize
    } else {
        usize::MAX
    }
}

/// Effective truncation distance `h(ℓ)` for every `ℓ`, precomputed from the
/// rank at which each off-diagonal block first receives a kept entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationProfile {
    /// `need[r-1]`: smallest `ℓ` covering every pair at distances `1..=r`
    /// (`None` if some such block is zero in `K_d`).
    pub need: Vec<Option<usize>>,
    pub max_ell: usize,
}

impl TruncationProfile {
    pub fn new(ev: &Evaluator, graph: &SystemGraph) -> Self {
        let part = &ev.partition;
        let ranks = ev.magnitude_order().ranks();
        let nx = ev.n_states();
        let n = part.n_subsystems();
        let max_d = graph.max_finite_distance();
        let mut need_at: Vec<Option<usize>> = vec![Some(0); max_d];
        for i in 0..n {
            for j in 0..n {
                let Distance::Finite(r) = graph.distance(i, j) else { continue };
                if i == j || r == 0 {
                    continue;
                }
                let first = part.inputs[i]
                    .iter()
                    .flat_map(|&u| part.states[j].iter().map(move |&x| u * nx + x))
                    .filter_map(|idx| ranks[idx])
                    .min()
                    .map(|rank| rank + 1);
                need_at[r - 1] = match (need_at[r - 1], first) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
        }
        let mut need = Vec::with_capacity(max_d);
        let mut acc = Some(0usize);
        for v in need_at {
            acc = match (acc, v) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            };
            need.push(acc);
        }
        Self { need, max_ell: ev.n_inputs() * nx }
    }

    pub fn max_distance(&self) -> usize {
        self.need.len()
    }

    /// `h(ℓ)`.
    pub fn h(&self, ell: usize) -> usize {
        self.need.iter().take_while(|n| n.is_some_and(|v| v <= ell)).count()
    }

    /// `ℓ_stab = min{ℓ : h(ℓ) ≥ h_stab}`, or `None` if no `ℓ` reaches it.
    pub fn min_ell_for(&self, h: usize) -> Option<usize> {
        if h == 0 {
            return Some(1);
        }
        self.need.get(h - 1).copied().flatten().map(|v| v.max(1))
    }

    /// `h⁻¹(h) = max{ℓ : h(ℓ) ≤ h}`; zero when even `ℓ = 1` exceeds it.
    pub fn inverse(&self, h: usize) -> usize {
        match self.need.get(h).copied() {
            None | Some(None) => self.max_ell,
            Some(Some(v)) => v.saturating_sub(1).min(self.max_ell),
        }
    }
}

/// Direct form of `h(ℓ)`: realize `K_s([ℓ, 1, 1])` and test every pair.
pub fn effective_truncation_distance(ell: usize, k_dense: &Matrix, partition: &Partition, graph: &SystemGraph) -> usize {
    let (nu, nx) = k_dense.shape();
    let k = apply_masks(&crate::genome::prune_by_magnitude(k_dense, ell), &vec![true; nu], &vec![true; nx]);
    let adj = controller_adjacency(&k, partition);
    let n = partition.n_subsystems();
    let max_d = graph.max_finite_distance();
    let mut h = 0;
    for r in 1..=max_d {
        let covered = (0..n).all(|i| (0..n).all(|j| i == j || graph.distance(i, j) != Distance::Finite(r) || adj[i][j]));
        if !covered {
            break;
        }
        h = r;
    }
    h
}

/// `(p_imp, P_imp)`: one-offspring and any-offspring improvement probabilities.
pub fn improvement_probability(h_prev: usize, h_star: usize, population: usize, d: usize, elites: usize) -> (f64, f64) {
    if h_prev <= h_star {
        return (0.0, 0.0);
    }
    let p = 1.0 / (population as f64 * (2 * d + 1) as f64);
    let offspring = population.saturating_sub(elites) as i32;
    (p, 1.0 - (1.0 - p).powi(offspring))
}

/// Tighter one-offspring form that also requires no mask bit to flip
/// (membership in the sublevel set taken as certain).
pub fn improvement_probability_masked(p_imp: f64, p_m: f64, n_inputs: usize, n_states: usize) -> f64 {
    p_imp * (1.0 - p_m).powi((n_inputs + n_states) as i32)
}

/// `Ĵ_t = Ĵ_{t−1} − max(0, (w_c − Φ(h_{t−1})) P_imp(t))` for `t = 1..=len(h) − 1`,
/// starting from `Ĵ_0 = j0`, with `h[t]` the observed depth after generation `t`.
pub fn predicted_curve(h: &[usize], j0: f64, w_c: f64, h_star: usize, phi: impl Fn(usize) -> f64, ea: &EaConfig) -> Vec<f64> {
    let mut j = j0;
    h.windows(2)
        .map(|w| {
            let (_, big_p) = improvement_probability(w[0], h_star, ea.population, ea.mutation_range, ea.elites);
            j -= ((w_c - phi(w[0])) * big_p).max(0.0);
            j
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityMargin {
    pub sigma_crit: f64,
    pub omega: f64,
    pub beta: f64,
}

/// `σ_crit = (1 − ρ²)/(4Υ²L(L + 2Υρ))`, `Ω = Υ/√(1 − ρ²)`, `β = √(1 − (1 − ρ²)/(2Υ²))`.
pub fn stability_margin(l: f64, fit: &DecayFit) -> StabilityMargin {
    let (u, rho) = (fit.upsilon, fit.rho);
    let gap = 1.0 - rho * rho;
    StabilityMargin {
        sigma_crit: gap / (4.0 * u * u * l * (l + 2.0 * u * rho)),
        omega: (u * u / gap).sqrt(),
        beta: (1.0 - gap / (2.0 * u * u)).sqrt(),
    }
}

/// `Υ √(Σ_{h<r≤max} N_Δ(r) ρ^{2r})`.
pub fn truncation_tail(fit: &DecayFit, n_delta: &[usize], h: usize) -> f64 {
    let s: f64 = n_delta.iter().enumerate().skip(h + 1).map(|(r, &c)| c as f64 * fit.rho.powi(2 * r as i32)).sum();
    fit.upsilon * s.sqrt()
}

/// Smallest `h` whose truncation tail is below `σ_crit`; `(max + 1, true)` if none is.
pub fn h_stab(fit: &DecayFit, sigma_crit: f64, n_delta: &[usize]) -> (usize, bool) {
    let max_d = n_delta.len().saturating_sub(1);
    (0..=max_d)
        .find(|&h| truncation_tail(fit, n_delta, h) < sigma_crit)
        .map_or((max_d + 1, true), |h| (h, false))
}

/// Lower bound on the chance that an offspring of the best individual is
/// truncated no deeper than `ℓ_stab` and keeps all masks.
pub fn offspring_stability_probability(ell_best: usize, ell_stab: usize, d: usize, p_m: f64, n_inputs: usize, n_states: usize) -> f64 {
    let width = (2 * d + 1) as f64;
    let first = ((ell_best as f64 - ell_stab as f64 + d as f64 + 1.0).max(0.0) / width).min(1.0);
    (first * (1.0 - p_m).powi((n_inputs + n_states) as i32)).min(1.0)
}

/// `(‖ΔK_comm‖_F, ‖ΔK_as‖_F)` for `ΔK = K_s − K_d`: the off-diagonal-block
/// part and the remainder.
pub fn perturbation_split(k_s: &Matrix, k_dense: &Matrix, partition: &Partition) -> (f64, f64) {
    let io = partition.input_owner();
    let so = partition.state_owner();
    let dk = k_s - k_dense;
    let (mut comm, mut rest) = (0.0, 0.0);
    for ((r, c), v) in (0..dk.nrows()).flat_map(|r| (0..dk.ncols()).map(move |c| (r, c))).map(|rc| (rc, dk[rc])) {
        if io[r] != so[c] {
            comm += v * v;
        } else {
            rest += v * v;
        }
    }
    (comm.sqrt(), rest.sqrt())
}

/// Observed best-individual transitions that dropped links with full masks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkPruningCheck {
    pub transitions: usize,
    pub violations: usize,
    /// Largest `Δ J_ratio / (Φ(h_{t−1}) X_t)` seen; at most 1 when no violation.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub sublevel: f64,
    pub lipschitz_samples: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { sublevel: 10.0, lipschitz_samples: 40, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    #[serde(rename = "L_J")]
    pub l_j: f64,
    pub lipschitz: LipschitzEstimate,
    /// Spatial envelope of `K_d`, used for `Φ` and `h*`.
    pub decay: DecayFit,
    /// Envelope that also bounds the closed-loop transient, used for `σ_crit`, `Ω`, `β`, `h_stab`.
    pub certified_decay: DecayFit,
    /// `(h, Φ(h))` for `h = 0..=max distance`.
    pub phi: Vec<(usize, f64)>,
    pub h_star: usize,
    pub sigma_crit: f64,
    pub omega: f64,
    pub beta: f64,
    pub h_stab: usize,
    pub h_stab_vacuous: bool,
    pub ell_stab: usize,
    pub n_delta: Vec<usize>,
    #[serde(rename = "L")]
    pub norm_bound: f64,
    /// Not computable from the model; kept for completeness.
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub h_inverse_h_star: usize,
    pub h_inverse_definition: String,
    pub p_imp: f64,
    pub p_imp_masked: f64,
    pub big_p_imp: f64,
    pub final_ell: usize,
    pub final_offspring_stability: f64,
    pub link_pruning: LinkPruningCheck,
    /// `(J(K*) − J(K_d)) / (σ‖Σ‖²/(1 − β²))` with `σ = ‖K* − K_d‖_F`; diagnostic only.
    pub suboptimality_ratio: Option<f64>,
    /// `Ĵ_t` for `t = 1..=G_max`.
    pub predicted_curve: Vec<f64>,
}

/// Depths `h_0, …, h_G` from a run's traces.
pub fn trace_depths(initial: &GenerationTrace, traces: &[GenerationTrace]) -> Vec<usize> {
    std::iter::once(initial.h_t).chain(traces.iter().map(|t| t.h_t)).collect()
}

pub fn analyze(ev: &Evaluator, graph: &SystemGraph, run: &RunResult, config: &AnalysisConfig) -> Result<AnalysisReport> {
    let (nu, nx) = (ev.n_inputs(), ev.n_states());
    let w_c = run.config.weights.w_c;
    let decay = fit_decay(&ev.k_dense, &ev.partition, graph)?;
    let lipschitz = estimate_lipschitz(&ev.problem, &ev.k_dense, ev.j_dense, config.sublevel, config.lipschitz_samples, config.seed)?;
    let l_j = lipschitz.l_j;
    let phi_at = |h: usize| cost_rate(h, &decay, l_j, ev.j_dense, nu, nx);
    let max_d = graph.max_finite_distance();
    let phi = (0..=max_d).map(|h| (h, phi_at(h))).collect();
    let h_star = critical_distance(&decay, l_j, ev.j_dense, w_c, nu, nx);

    let l = norm_bound(&ev.problem);
    let certified = certified_decay(&ev.problem.closed_loop(&ev.k_dense), &decay, l)?;
    let margin = stability_margin(l, &certified);
    let n_delta = graph.distance_counts();
    let (h_stab, vacuous) = h_stab(&certified, margin.sigma_crit, &n_delta);
    let profile = TruncationProfile::new(ev, graph);
    let ell_stab = profile.min_ell_for(h_stab).unwrap_or(nu * nx);

    let ea = &run.config;
    let (p_imp, big_p_imp) = improvement_probability(usize::MAX, 0, ea.population, ea.mutation_range, ea.elites);
    let depths = trace_depths(&run.initial, &run.traces);
    let predicted = predicted_curve(&depths, run.initial.best_cost.value(), w_c, h_star, phi_at, ea);

    let link_pruning = link_pruning_check(ev, &run.best_genes, &depths, phi_at)?;
    let suboptimality_ratio = {
        let sigma = (&run.best.eval.gain - &ev.k_dense).norm();
        let sig_norm = norm2(&ev.problem.sigma);
        let scale = sigma * sig_norm * sig_norm / (1.0 - margin.beta * margin.beta);
        run.best.eval.j_lqr.finite().filter(|_| scale > 0.0).map(|j| (j - ev.j_dense) / scale)
    };

    Ok(AnalysisReport {
        l_j,
        lipschitz,
        decay,
        certified_decay: certified,
        phi,
        h_star,
        sigma_crit: margin.sigma_crit,
        omega: margin.omega,
        beta: margin.beta,
        h_stab,
        h_stab_vacuous: vacuous,
        ell_stab,
        n_delta,
        norm_bound: l,
        alpha: None,
        gamma: None,
        h_inverse_h_star: profile.inverse(h_star),
        h_inverse_definition: "max{ell : h(ell) <= h*}".into(),
        p_imp,
        p_imp_masked: improvement_probability_masked(p_imp, ea.mutation_prob, nu, nx),
        big_p_imp,
        final_ell: run.best.gene.ell,
        final_offspring_stability: offspring_stability_probability(run.best.gene.ell, ell_stab, ea.mutation_range, ea.mutation_prob, nu, nx),
        link_pruning,
        suboptimality_ratio,
        predicted_curve: predicted,
    })
}

/// Checks `ΔJ_ratio ≤ Φ(h_{t−1}) X_t` on consecutive best genes that keep all
/// masks on and drop `X_t = ℓ_{t−1} − ℓ_t ≥ 1` entries.
pub fn link_pruning_check(ev: &Evaluator, best_genes: &[Gene], depths: &[usize], phi: impl Fn(usize) -> f64) -> Result<LinkPruningCheck> {
    let full = |g: &Gene| g.actuator_mask.iter().chain(&g.sensor_mask).all(|&b| b);
    let mut check = LinkPruningCheck::default();
    for (t, w) in best_genes.windows(2).enumerate() {
        let (prev, cur) = (&w[0], &w[1]);
        if !(full(prev) && full(cur) && cur.ell < prev.ell) {
            continue;
        }
        let (Some(j0), Some(j1)) = (ev.evaluate_plain(prev)?.j_ratio.finite(), ev.evaluate_plain(cur)?.j_ratio.finite()) else {
            continue;
        };
        let bound = phi(depths[t]) * (prev.ell - cur.ell) as f64;
        check.transitions += 1;
        let ratio = (j1 - j0) / bound;
        if j1 - j0 > bound {
            check.violations += 1;
        }
        check.worst_ratio = check.worst_ratio.max(ratio);
    }
    Ok(check)
}

/// Writes `h,phi` rows.
pub fn write_phi_csv<W: std::io::Write>(out: W, phi: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h", "phi"])?;
    for (h, v) in phi {
        w.write_record([h.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `generation,predicted_cost` rows, generations numbered from 1.
pub fn write_predicted_csv<W: std::io::Write>(out: W, curve: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generation", "predicted_cost"])?;
    for (t, v) in curve.iter().enumerate() {
        w.write_record([(t + 1).to_string(), Cost::new(*v).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
