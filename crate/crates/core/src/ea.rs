//! Evolutionary search over genes `[ℓ, a, s]`: initialization, softmax
//! selection, one-point crossover, bit-flip and link-count mutation, and an
//! elitist generation loop that records a trace per generation.
//!
//! All randomness comes from one seeded ChaCha stream consumed in a fixed
//! order per offspring (selection, crossover, mutation). Cost evaluation
//! draws nothing, so evaluating offspring in parallel does not change results.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::TruncationProfile;
use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::genome::{dense_rows, EvaluatedController, Evaluator, Gene, StructuralCounts, Weights};
use crate::lqr::Matrix;
use crate::parallel;
use crate::plant::Plant;
use crate::repair::RepairConfig;

/// Temperatures at or below this select the two lowest-cost individuals deterministically.
pub const ZERO_TEMPERATURE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elites: usize,
    pub temperature: f64,
    pub mutation_range: usize,
    pub weights: Weights,
    pub seed: u64,
    pub repair: Option<RepairConfig>,
    /// Put the all-keep gene at index 0 of the initial population.
    pub seed_dense: bool,
}

impl Default for EaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 150,
            crossover_prob: 0.8,
            mutation_prob: 0.05,
            elites: 10,
            temperature: 0.0,
            mutation_range: 5,
            weights: Weights::default(),
            seed: 0,
            repair: None,
            seed_dense: true,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.elites < 1 || self.elites >= self.population {
            return bad(format!("need 1 <= n_e < N_p, got n_e={} N_p={}", self.elites, self.population));
        }
        if self.mutation_range < 1 {
            return bad("mutation range d must be >= 1".into());
        }
        for (name, p) in [("p_c", self.crossover_prob), ("p_m", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be finite and >= 0, got {}", self.temperature));
        }
        let w = self.weights;
        if [w.w_a, w.w_s, w.w_c].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("weights must be finite and >= 0".into());
        }
        if let Some(r) = &self.repair {
            r.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Individual {
    pub gene: Gene,
    pub eval: EvaluatedController,
}

impl Individual {
    pub fn cost(&self) -> Cost {
        self.eval.j_ea
    }
}

pub type Population = Vec<Individual>;

/// Summary of one evaluated population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub generation: usize,
    pub best_cost: Cost,
    /// Mean over finite costs; `+inf` if none is finite.
    pub mean_cost: Cost,
    pub n_unstable: usize,
    pub n_repaired: usize,
    pub best_ell: usize,
    pub best_na: usize,
    pub best_ns: usize,
    pub best_nc: usize,
    pub h_t: usize,
}

/// Initial genes: `ℓ = nnz(K_d)` and Bernoulli(½) masks, with the all-keep
/// gene at index 0 when `seed_dense` is set.
pub fn init_population(config: &EaConfig, n_inputs: usize, n_states: usize, nnz: usize, rng: &mut impl Rng) -> Vec<Gene> {
    let ell = nnz.clamp(1, n_inputs * n_states);
    (0..config.population)
        .map(|i| {
            if i == 0 && config.seed_dense {
                Gene { ell, ..Gene::dense(n_inputs, n_states) }
            } else {
                Gene {
                    ell,
                    actuator_mask: (0..n_inputs).map(|_| rng.random_bool(0.5)).collect(),
                    sensor_mask: (0..n_states).map(|_| rng.random_bool(0.5)).collect(),
                }
            }
        })
        .collect()
}

fn draw_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Two distinct parent indices. For `τ > 0`, drawn without replacement with
/// probability `∝ exp(−J/τ)` (infinite costs get weight zero; if only one
/// finite individual exists, its partner is uniform among the rest). For
/// `τ ≈ 0`, the two lowest costs, ties by index.
pub fn select_parents(costs: &[Cost], temperature: f64, rng: &mut impl Rng) -> Result<(usize, usize)> {
    if costs.len() < 2 {
        return Err(Error::InvalidConfig("selection needs at least two individuals".into()));
    }
    let best = costs.iter().copied().min().expect("non-empty");
    if !best.is_finite() {
        return Err(Error::DegeneratePopulation);
    }
    if temperature <= ZERO_TEMPERATURE {
        let mut idx: Vec<usize> = (0..costs.len()).collect();
        idx.sort_by_key(|&i| costs[i]);
        return Ok((idx[0], idx[1]));
    }
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|c| c.finite().map_or(0.0, |v| (-(v - best.value()) / temperature).exp()))
        .collect();
    let first = draw_weighted(&weights, rng);
    weights[first] = 0.0;
    let second = if weights.iter().any(|&w| w > 0.0) {
        draw_weighted(&weights, rng)
    } else {
        let k = rng.random_range(0..costs.len() - 1);
        if k >= first {
            k + 1
        } else {
            k
        }
    };
    Ok((first, second))
}

/// One-point crossover on the flattened `[ℓ, a, s]` at a given split `k ∈ [1, N_θ − 1]`:
/// the child takes positions `0..k` from `p1` and the rest from `p2`.
pub fn splice(p1: &Gene, p2: &Gene, k: usize) -> Gene {
    let nu = p1.actuator_mask.len();
    let pick = |pos: usize| if pos < k { p1 } else { p2 };
    Gene {
        ell: pick(0).ell,
        actuator_mask: (0..nu).map(|i| pick(1 + i).actuator_mask[i]).collect(),
        sensor_mask: (0..p1.sensor_mask.len()).map(|j| pick(1 + nu + j).sensor_mask[j]).collect(),
    }
}

/// With probability `p_c`, splices at a uniform `k ∈ {1, …, N_θ − 1}`; otherwise copies `p1`.
pub fn crossover(p1: &Gene, p2: &Gene, p_c: f64, rng: &mut impl Rng) -> Gene {
    let n_theta = p1.len();
    if n_theta < 2 || !rng.random_bool(p_c) {
        return p1.clone();
    }
    let k = rng.random_range(1..n_theta);
    splice(p1, p2, k)
}

/// `ℓ ← clip(ℓ + δ, 1, N_u N_x)` with `δ` uniform on `{−d, …, d}`, then each
/// mask bit flipped with probability `p_m`.
pub fn mutate(gene: &Gene, p_m: f64, d: usize, rng: &mut impl Rng) -> Gene {
    let d = d as i64;
    let delta = rng.random_range(-d..=d);
    let mut out = apply_delta(gene, delta);
    for bit in out.actuator_mask.iter_mut().chain(out.sensor_mask.iter_mut()) {
        if rng.random_bool(p_m) {
            *bit = !*bit;
        }
    }
    out
}

/// Link-count shift with saturation to `[1, N_u N_x]`.
pub fn apply_delta(gene: &Gene, delta: i64) -> Gene {
    let max = gene.max_ell() as i64;
    Gene { ell: (gene.ell as i64 + delta).clamp(1, max.max(1)) as usize, ..gene.clone() }
}

/// Evaluates genes, in parallel when the `parallel` feature is on.
pub fn evaluate_batch(ev: &Evaluator, genes: &[Gene]) -> Result<Vec<EvaluatedController>> {
    parallel::map(genes, |g| ev.evaluate(g)).into_iter().collect()
}

/// Sequential reference for [`evaluate_batch`].
pub fn evaluate_batch_sequential(ev: &Evaluator, genes: &[Gene]) -> Result<Vec<EvaluatedController>> {
    parallel::map_sequential(genes, |g| ev.evaluate(g)).into_iter().collect()
}

/// Outcome of a run: the best individual, per-generation traces, and the
/// dense reference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub config: EaConfig,
    pub best: Individual,
    /// Trace of the initial population (generation 0).
    pub initial: GenerationTrace,
    /// Traces for generations `1..=G_max`.
    pub traces: Vec<GenerationTrace>,
    /// Best gene of the initial population, then of each generation.
    pub best_genes: Vec<Gene>,
    pub dense: EvaluatedController,
    pub j_dense: f64,
    #[serde(with = "dense_rows")]
    pub k_dense: Matrix,
}

impl RunResult {
    /// `J_EA(θ*) / J_EA(K_d)`.
    pub fn normalized_final(&self) -> f64 {
        self.best.cost().value() / self.dense.j_ea.value()
    }

    /// Best cost per generation divided by the dense objective.
    pub fn normalized_trajectory(&self) -> Vec<f64> {
        let d = self.dense.j_ea.value();
        self.traces.iter().map(|t| t.best_cost.value() / d).collect()
    }
}

/// Elitist generation loop with an evaluation cache keyed by gene.
pub struct Engine<'a> {
    pub evaluator: &'a Evaluator,
    pub config: EaConfig,
    profile: TruncationProfile,
    rng: ChaCha8Rng,
    cache: HashMap<Gene, EvaluatedController>,
}

impl<'a> Engine<'a> {
    pub fn new(evaluator: &'a Evaluator, profile: TruncationProfile, config: EaConfig) -> Result<Self> {
        config.validate()?;
        if evaluator.repair != config.repair {
            return Err(Error::InvalidConfig("evaluator repair setting differs from the EA config".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { evaluator, config, profile, rng, cache: HashMap::new() })
    }

    /// Scores genes, reusing cached evaluations; new genes are scored in parallel.
    pub fn evaluate(&mut self, genes: Vec<Gene>) -> Result<Population> {
        let mut fresh: Vec<Gene> = Vec::new();
        for g in &genes {
            if !self.cache.contains_key(g) && !fresh.contains(g) {
                fresh.push(g.clone());
            }
        }
        let evals = evaluate_batch(self.evaluator, &fresh)?;
        self.cache.extend(fresh.into_iter().zip(evals));
        Ok(genes
            .into_iter()
            .map(|gene| {
                let eval = self.cache[&gene].clone();
                Individual { gene, eval }
            })
            .collect())
    }

    pub fn initial_population(&mut self) -> Result<Population> {
        let ev = self.evaluator;
        let genes = init_population(&self.config, ev.n_inputs(), ev.n_states(), ev.nnz_dense(), &mut self.rng);
        self.evaluate(genes)
    }

    /// `n_e` elites followed by `N_p − n_e` offspring, each from one
    /// selection → crossover → mutation pass.
    pub fn step(&mut self, population: &Population, generation: usize) -> Result<(Population, GenerationTrace)> {
        let cfg = self.config.clone();
        let costs: Vec<Cost> = population.iter().map(Individual::cost).collect();
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by_key(|&i| costs[i]);

        let mut offspring = Vec::with_capacity(cfg.population - cfg.elites);
        for _ in cfg.elites..cfg.population {
            let (i, j) = select_parents(&costs, cfg.temperature, &mut self.rng)?;
            let child = crossover(&population[i].gene, &population[j].gene, cfg.crossover_prob, &mut self.rng);
            offspring.push(mutate(&child, cfg.mutation_prob, cfg.mutation_range, &mut self.rng));
        }
        let mut next: Population = order[..cfg.elites].iter().map(|&i| population[i].clone()).collect();
        next.extend(self.evaluate(offspring)?);
        let trace = self.trace(&next, generation);
        Ok((next, trace))
    }

    pub fn trace(&self, population: &Population, generation: usize) -> GenerationTrace {
        summarize(population, generation, &self.profile)
    }

    pub fn run(mut self) -> Result<RunResult> {
        let dense_gene = Gene { ell: self.evaluator.nnz_dense().max(1), ..Gene::dense(self.evaluator.n_inputs(), self.evaluator.n_states()) };
        let dense = self.evaluator.evaluate_plain(&dense_gene)?;
        let mut population = self.initial_population()?;
        let initial = self.trace(&population, 0);
        let mut traces = Vec::with_capacity(self.config.generations);
        let mut best_genes = vec![best_individual(&population).gene.clone()];
        for t in 1..=self.config.generations {
            let (next, trace) = self.step(&population, t)?;
            population = next;
            traces.push(trace);
            best_genes.push(best_individual(&population).gene.clone());
        }
        let best = best_individual(&population).clone();
        Ok(RunResult {
            config: self.config,
            best,
            initial,
            traces,
            best_genes,
            dense,
            j_dense: self.evaluator.j_dense,
            k_dense: self.evaluator.k_dense.clone(),
        })
    }
}

/// Lowest-cost individual, first on ties.
pub fn best_individual(population: &Population) -> &Individual {
    population.iter().min_by_key(|ind| ind.cost()).expect("non-empty population")
}

pub fn summarize(population: &Population, generation: usize, profile: &TruncationProfile) -> GenerationTrace {
    let best = best_individual(population);
    let finite: Vec<f64> = population.iter().filter_map(|i| i.cost().finite()).collect();
    let mean_cost = if finite.is_empty() { Cost::INFINITY } else { Cost::new(finite.iter().sum::<f64>() / finite.len() as f64) };
    let StructuralCounts { n_act, n_sens, n_comm } = best.eval.counts;
    GenerationTrace {
        generation,
        best_cost: best.cost(),
        mean_cost,
        n_unstable: population.iter().filter(|i| !i.cost().is_finite()).count(),
        n_repaired: population.iter().filter(|i| i.eval.repaired).count(),
        best_ell: best.gene.ell,
        best_na: n_act,
        best_ns: n_sens,
        best_nc: n_comm,
        h_t: profile.h(best.gene.ell),
    }
}

/// Runs the EA on a plant with `Q = I`, `R = I`, `Σ = I`.
pub fn run(plant: &Plant, config: &EaConfig) -> Result<RunResult> {
    config.validate()?;
    let ev = Evaluator::new(plant, config.weights)?.with_repair(config.repair);
    let profile = TruncationProfile::new(&ev, &plant.graph());
    Engine::new(&ev, profile, config.clone())?.run()
}

pub const TRACE_HEADER: [&str; 10] =
    ["generation", "best_cost", "mean_cost", "n_unstable", "n_repaired", "best_ell", "best_na", "best_ns", "best_nc", "h_t"];

/// Writes traces as CSV, optionally preceded by a `# ...` comment line.
pub fn write_trace_csv<W: Write>(mut out: W, traces: &[GenerationTrace], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for t in traces {
        w.write_record([
            t.generation.to_string(),
            t.best_cost.to_string(),
            t.mean_cost.to_string(),
            t.n_unstable.to_string(),
            t.n_repaired.to_string(),
            t.best_ell.to_string(),
            t.best_na.to_string(),
            t.best_ns.to_string(),
            t.best_nc.to_string(),
            t.h_t.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV, skipping `#` comment lines.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<GenerationTrace>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::InvalidConfig(format!("unexpected trace header {headers:?}")));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::InvalidConfig(format!("bad integer `{s}`: {e}")));
    let parse_cost = |s: &str| {
        if s == "inf" {
            Ok(Cost::INFINITY)
        } else {
            s.parse::<f64>().map(Cost::new).map_err(|e| Error::InvalidConfig(format!("bad cost `{s}`: {e}")))
        }
    };
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(GenerationTrace {
                generation: parse_usize(&rec[0])?,
                best_cost: parse_cost(&rec[1])?,
                mean_cost: parse_cost(&rec[2])?,
                n_unstable: parse_usize(&rec[3])?,
                n_repaired: parse_usize(&rec[4])?,
                best_ell: parse_usize(&rec[5])?,
                best_na: parse_usize(&rec[6])?,
                best_ns: parse_usize(&rec[7])?,
                best_nc: parse_usize(&rec[8])?,
                h_t: parse_usize(&rec[9])?,
            })
        })
        .collect()
}

/// Final controller document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalController {
    pub gene: Gene,
    #[serde(rename = "K_s", with = "dense_rows")]
    pub k_s: Matrix,
    pub cost: CostBreakdown,
    pub repaired: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub j_ea: Cost,
    pub j_ratio: Cost,
    pub j_lqr: Cost,
    pub n_act: usize,
    pub n_sens: usize,
    pub n_comm: usize,
    pub stable: bool,
}

impl From<&Individual> for FinalController {
    fn from(ind: &Individual) -> Self {
        let e = &ind.eval;
        Self {
            gene: ind.gene.clone(),
            k_s: e.gain.clone(),
            cost: CostBreakdown {
                j_ea: e.j_ea,
                j_ratio: e.j_ratio,
                j_lqr: e.j_lqr,
                n_act: e.counts.n_act,
                n_sens: e.counts.n_sens,
                n_comm: e.counts.n_comm,
                stable: e.stable,
            },
            repaired: e.repaired,
        }
    }
}
