//! Run configuration: a JSON file whose fields can be overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use codesign_core::ea::EaConfig;
use codesign_core::plant::{make_grid_swing, make_ieee13, Plant};
use codesign_core::repair::RepairConfig;
use codesign_core::Weights;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Grid,
    Ieee13,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Open-loop spectral radius; grids default to 0.99 and the feeder to 1.
    pub target_radius: Option<f64>,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self { kind: PlantKind::Grid, rows: 5, cols: 5, seed: 1, target_radius: None }
    }
}

impl PlantSpec {
    pub fn build(&self) -> Result<Plant> {
        Ok(match self.kind {
            PlantKind::Grid => make_grid_swing(self.rows, self.cols, self.seed, self.target_radius)?,
            PlantKind::Ieee13 => make_ieee13(self.seed, self.target_radius.unwrap_or(1.0))?,
        })
    }
}

/// EA parameters other than the weights and the repair stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elites: usize,
    pub temperature: f64,
    pub mutation_range: usize,
    /// First EA seed; sub-runs use consecutive seeds.
    pub seed: u64,
    pub seeds: usize,
    pub seed_dense: bool,
}

impl Default for EaParams {
    fn default() -> Self {
        let d = EaConfig::default();
        Self {
            population: d.population,
            generations: d.generations,
            crossover_prob: d.crossover_prob,
            mutation_prob: d.mutation_prob,
            elites: d.elites,
            temperature: d.temperature,
            mutation_range: d.mutation_range,
            seed: d.seed,
            seeds: 1,
            seed_dense: d.seed_dense,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub plant: PlantSpec,
    /// Plant JSON to load instead of generating one from `plant`.
    pub plant_file: Option<PathBuf>,
    pub weights: Weights,
    pub ea: EaParams,
    /// Repair of unstable genes; `None` disables it.
    pub repair: Option<RepairConfig>,
    /// Score the dense and diagonal LQR baselines.
    pub baselines: bool,
    /// Also score intermediate magnitude truncations of the dense gain.
    pub extra_baselines: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plant: PlantSpec::default(),
            plant_file: None,
            weights: Weights::default(),
            ea: EaParams::default(),
            repair: None,
            baselines: false,
            extra_baselines: false,
            output_dir: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        crate::output::read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if [w.w_a, w.w_s, w.w_c].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            bail!("weights must be finite and >= 0");
        }
        if let Some(p) = &self.plant_file {
            if !p.is_file() {
                bail!("plant file {} does not exist", p.display());
            }
        }
        if self.ea.seeds == 0 {
            bail!("--seeds must be at least 1");
        }
        self.ea_config(self.ea.seed).validate()?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.ea.seeds as u64).map(|i| self.ea.seed + i).collect()
    }

    pub fn ea_config(&self, seed: u64) -> EaConfig {
        let e = &self.ea;
        EaConfig {
            population: e.population,
            generations: e.generations,
            crossover_prob: e.crossover_prob,
            mutation_prob: e.mutation_prob,
            elites: e.elites,
            temperature: e.temperature,
            mutation_range: e.mutation_range,
            weights: self.weights,
            seed,
            repair: self.repair,
            seed_dense: e.seed_dense,
        }
    }

    pub fn plant(&self) -> Result<Plant> {
        match &self.plant_file {
            Some(p) => Ok(Plant::load(p)?),
            None => self.plant.build(),
        }
    }
}
