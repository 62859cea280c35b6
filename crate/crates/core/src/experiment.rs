//! Named experiments: plant family, baselines and multi-seed summaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ea::{self, EaConfig, GenerationTrace, RunResult};
use crate::error::{Error, Result};
use crate::genome::{EvaluatedController, Evaluator, Gene};
use crate::lqr::Matrix;
use crate::plant::{make_grid_swing, make_ieee13, Partition, Plant};
use crate::repair::RepairConfig;

/// Spectral radius of the open-loop plant in the repair experiment.
pub const UNSTABLE_RADIUS: f64 = 1.1;

/// Fractions of `nnz(K_d)` kept by the optional intermediate truncation baselines.
pub const TRUNCATION_FRACTIONS: [f64; 3] = [0.75, 0.5, 0.25];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Grid5,
    Grid7,
    Ieee13,
    Unstable,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [Self::Grid5, Self::Grid7, Self::Ieee13, Self::Unstable];

    pub fn name(self) -> &'static str {
        match self {
            Self::Grid5 => "grid5",
            Self::Grid7 => "grid7",
            Self::Ieee13 => "ieee13",
            Self::Unstable => "unstable",
        }
    }

    /// Plant for one seed. The plant and the EA share the seed.
    pub fn plant(self, seed: u64) -> Result<Plant> {
        match self {
            Self::Grid5 => make_grid_swing(5, 5, seed, None),
            Self::Grid7 => make_grid_swing(7, 7, seed, None),
            Self::Ieee13 => make_ieee13(seed, 1.0),
            Self::Unstable => make_grid_swing(5, 5, seed, Some(UNSTABLE_RADIUS)),
        }
    }

    /// The repair settings compared by this experiment.
    pub fn arms(self) -> Vec<Option<RepairConfig>> {
        match self {
            Self::Unstable => vec![None, Some(RepairConfig::default())],
            _ => vec![None],
        }
    }

    pub fn default_seeds(self) -> Vec<u64> {
        match self {
            Self::Unstable => (1..=10).collect(),
            _ => (1..=5).collect(),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment `{s}` (expected grid5, grid7, ieee13 or unstable)")))
    }
}

/// `K_d` with every off-diagonal subsystem block set to zero.
pub fn diagonal_gain(k: &Matrix, partition: &Partition) -> Matrix {
    let io = partition.input_owner();
    let so = partition.state_owner();
    Matrix::from_fn(k.nrows(), k.ncols(), |r, c| if io[r] == so[c] { k[(r, c)] } else { 0.0 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Baselines {
    pub dense: EvaluatedController,
    /// `+inf` cost when the diagonal gain does not stabilize the plant.
    pub diagonal: EvaluatedController,
    /// `(ℓ, Π_ℓ(K_d))` for the intermediate magnitude truncations, when requested.
    pub truncations: Vec<(usize, EvaluatedController)>,
}

/// Dense and diagonal LQR scored with the co-design objective, without repair.
pub fn baselines(ev: &Evaluator, extra: bool) -> Result<Baselines> {
    let dense = ev.score_gain(ev.k_dense.clone(), false)?;
    let diagonal = ev.score_gain(diagonal_gain(&ev.k_dense, &ev.partition), false)?;
    let mut truncations = Vec::new();
    if extra {
        let nnz = ev.nnz_dense();
        for f in TRUNCATION_FRACTIONS {
            let ell = ((nnz as f64 * f).round() as usize).max(1);
            let gene = Gene { ell, ..Gene::dense(ev.n_inputs(), ev.n_states()) };
            truncations.push((ell, ev.evaluate_plain(&gene)?));
        }
    }
    Ok(Baselines { dense, diagonal, truncations })
}

/// Percent reduction of `cost` relative to `baseline`; `None` for an infinite baseline.
pub fn improvement(cost: f64, baseline: f64) -> Option<f64> {
    baseline.is_finite().then(|| 100.0 * (1.0 - cost / baseline))
}

/// Mean fraction of unstable individuals over `traces`.
pub fn unstable_fraction(traces: &[GenerationTrace], population: usize) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    traces.iter().map(|t| t.n_unstable as f64 / population as f64).sum::<f64>() / traces.len() as f64
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { mean, std, n }
    }
}

/// Number of leading generations used for the early unstable fraction.
pub const EARLY_GENERATIONS: usize = 10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub result: RunResult,
    pub baselines: Baselines,
    pub improvement_dense: f64,
    pub improvement_diagonal: Option<f64>,
    pub unstable_fraction: f64,
    pub unstable_fraction_early: f64,
}

/// One EA run against its baselines.
pub fn run_seed(plant: &Plant, config: &EaConfig, extra_baselines: bool) -> Result<SeedRun> {
    let result = ea::run(plant, config)?;
    let ev = Evaluator::new(plant, config.weights)?;
    let baselines = baselines(&ev, extra_baselines)?;
    let cost = result.best.cost().value();
    let improvement_dense = improvement(cost, baselines.dense.j_ea.value()).expect("dense LQR is stabilizing");
    let improvement_diagonal = improvement(cost, baselines.diagonal.j_ea.value());
    let early = &result.traces[..result.traces.len().min(EARLY_GENERATIONS)];
    Ok(SeedRun {
        seed: config.seed,
        unstable_fraction: unstable_fraction(&result.traces, config.population),
        unstable_fraction_early: unstable_fraction(early, config.population),
        result,
        baselines,
        improvement_dense,
        improvement_diagonal,
    })
}

/// All seeds of one repair setting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Arm {
    pub repair: Option<RepairConfig>,
    pub runs: Vec<SeedRun>,
    pub final_cost: Stats,
    pub normalized_final: Stats,
    pub improvement_dense: Stats,
    /// Over seeds whose diagonal baseline is stable.
    pub improvement_diagonal: Stats,
    pub diagonal_unstable: usize,
    pub unstable_fraction: Stats,
    pub unstable_fraction_early: Stats,
    /// Per-generation mean normalized best cost over seeds.
    pub mean_trajectory: Vec<f64>,
    pub std_trajectory: Vec<f64>,
}

impl Arm {
    pub fn new(repair: Option<RepairConfig>, runs: Vec<SeedRun>) -> Self {
        let pick = |f: &dyn Fn(&SeedRun) -> f64| Stats::of(&runs.iter().map(f).collect::<Vec<_>>());
        let final_cost = pick(&|r| r.result.best.cost().value());
        let normalized_final = pick(&|r| r.result.normalized_final());
        let improvement_dense = pick(&|r| r.improvement_dense);
        let diag: Vec<f64> = runs.iter().filter_map(|r| r.improvement_diagonal).collect();
        let unstable_fraction = pick(&|r| r.unstable_fraction);
        let unstable_fraction_early = pick(&|r| r.unstable_fraction_early);
        let trajectories: Vec<Vec<f64>> = runs.iter().map(|r| r.result.normalized_trajectory()).collect();
        let generations = trajectories.iter().map(Vec::len).min().unwrap_or(0);
        let per_gen: Vec<Stats> =
            (0..generations).map(|t| Stats::of(&trajectories.iter().map(|tr| tr[t]).collect::<Vec<_>>())).collect();
        Self {
            repair,
            final_cost,
            normalized_final,
            improvement_dense,
            improvement_diagonal: Stats::of(&diag),
            diagonal_unstable: runs.len() - diag.len(),
            unstable_fraction,
            unstable_fraction_early,
            mean_trajectory: per_gen.iter().map(|s| s.mean).collect(),
            std_trajectory: per_gen.iter().map(|s| s.std).collect(),
            runs,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: ExperimentId,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
}

impl ExperimentReport {
    pub fn arm(&self, repair: bool) -> Option<&Arm> {
        self.arms.iter().find(|a| a.repair.is_some() == repair)
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut s = format!("experiment {} over seeds {:?}\n", self.id, self.seeds);
        for arm in &self.arms {
            let label = if arm.repair.is_some() { "with repair" } else { "without repair" };
            let diag = if arm.improvement_diagonal.n == 0 {
                "n/a (diagonal LQR unstable)".to_string()
            } else {
                format!("{:.1}% ± {:.1}", arm.improvement_diagonal.mean, arm.improvement_diagonal.std)
            };
            s += &format!(
                "[{label}] final J_EA {:.3} ± {:.3} | vs dense {:.1}% ± {:.1} | vs diagonal {diag} | diagonal unstable {}/{} | unstable fraction {:.3} (first {EARLY_GENERATIONS}: {:.3})\n",
                arm.final_cost.mean,
                arm.final_cost.std,
                arm.improvement_dense.mean,
                arm.improvement_dense.std,
                arm.diagonal_unstable,
                arm.runs.len(),
                arm.unstable_fraction.mean,
                arm.unstable_fraction_early.mean,
            );
            for r in &arm.runs {
                let c = r.result.best.eval.counts;
                s += &format!(
                    "  seed {:>3}: J_EA {:.3} (dense {:.3}, diagonal {}) actuators {} sensors {} links {}\n",
                    r.seed,
                    r.result.best.cost(),
                    r.baselines.dense.j_ea,
                    r.baselines.diagonal.j_ea,
                    c.n_act,
                    c.n_sens,
                    c.n_comm
                );
            }
        }
        s
    }
}

/// Runs every arm of an experiment over `seeds`, one seed at a time.
/// `base` supplies the EA parameters; its seed and repair fields are overridden.
pub fn run_experiment(id: ExperimentId, seeds: &[u64], base: &EaConfig, extra_baselines: bool) -> Result<ExperimentReport> {
    let mut arms = Vec::new();
    for repair in id.arms() {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let plant = id.plant(seed)?;
            let config = EaConfig { seed, repair, ..base.clone() };
            runs.push(run_seed(&plant, &config, extra_baselines)?);
        }
        arms.push(Arm::new(repair, runs));
    }
    Ok(ExperimentReport { id, seeds: seeds.to_vec(), arms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantMetadata;
    use nalgebra::dmatrix;

    #[test]
    fn ids_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
        assert!("grid9".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stats::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn diagonal_of_block_diagonal_plant_equals_dense() {
        let a = dmatrix![0.9, 0.0; 0.0, 1.05];
        let b = dmatrix![1.0, 0.0; 0.0, 0.5];
        let meta = PlantMetadata { kind: "test".into(), seed: None, target_radius: None };
        let plant = Plant::new(a, b, Partition::uniform(2, 1, 1), meta).unwrap();
        let ev = Evaluator::new(&plant, Default::default()).unwrap();
        let base = baselines(&ev, false).unwrap();
        assert_eq!(base.diagonal.gain, base.dense.gain);
        assert_eq!(base.diagonal.j_ea, base.dense.j_ea);
    }

    #[test]
    fn diagonal_baseline_has_no_links() {
        let plant = ExperimentId::Grid5.plant(3).unwrap();
        let ev = Evaluator::new(&plant, Default::default()).unwrap();
        let base = baselines(&ev, true).unwrap();
        assert_eq!(base.diagonal.counts.n_comm, 0);
        assert!(base.dense.counts.n_comm > 0);
        assert_eq!(base.truncations.len(), TRUNCATION_FRACTIONS.len());
        assert!((base.dense.j_ratio.value() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn improvement_handles_infinite_baseline() {
        assert_eq!(improvement(1.0, 4.0), Some(75.0));
        assert_eq!(improvement(1.0, f64::INFINITY), None);
    }

    #[test]
    fn short_run_summary() {
        let base = EaConfig { generations: 4, ..Default::default() };
        let report = run_experiment(ExperimentId::Unstable, &[1, 2], &base, false).unwrap();
        assert_eq!(report.arms.len(), 2);
        for arm in &report.arms {
            assert_eq!(arm.runs.len(), 2);
            assert_eq!(arm.mean_trajectory.len(), 4);
            assert!(arm.normalized_final.mean <= 1.0 + 1e-12);
        }
        assert!(report.arm(true).is_some());
        assert!(report.summary().contains("with repair"));
    }
}
