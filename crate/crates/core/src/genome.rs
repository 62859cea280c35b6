//! Gene encoding `[ℓ, a, s]`, the pruning operators that turn a dense gain
//! into a sparse one, structural counters and the co-design objective.

use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::lqr::{LqrProblem, Matrix};
use crate::plant::{Partition, Plant, ZERO_TOL};
use crate::repair::{self, RepairConfig};

/// One EA individual: link count plus actuator and sensor masks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gene {
    pub ell: usize,
    #[serde(with = "bitmask")]
    pub actuator_mask: Vec<bool>,
    #[serde(with = "bitmask")]
    pub sensor_mask: Vec<bool>,
}

mod bitmask {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        mask.iter().map(|&b| u8::from(b)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Vec::<u8>::deserialize(d)?
            .into_iter()
            .map(|v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!("mask entry must be 0 or 1, got {other}"))),
            })
            .collect()
    }
}

impl Gene {
    /// Keeps every link, actuator and sensor.
    pub fn dense(n_inputs: usize, n_states: usize) -> Self {
        Self { ell: n_inputs * n_states, actuator_mask: vec![true; n_inputs], sensor_mask: vec![true; n_states] }
    }

    /// Length of the flattened vector `[ℓ, a, s]`.
    pub fn len(&self) -> usize {
        1 + self.actuator_mask.len() + self.sensor_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_ell(&self) -> usize {
        self.actuator_mask.len() * self.sensor_mask.len()
    }

    pub fn validate(&self, n_inputs: usize, n_states: usize) -> Result<()> {
        if self.actuator_mask.len() != n_inputs || self.sensor_mask.len() != n_states {
            return Err(Error::Dimension(format!(
                "gene masks {}/{} do not match plant {}/{}",
                self.actuator_mask.len(),
                self.sensor_mask.len(),
                n_inputs,
                n_states
            )));
        }
        if self.ell < 1 || self.ell > n_inputs * n_states {
            return Err(Error::InvalidConfig(format!("link count {} outside [1, {}]", self.ell, n_inputs * n_states)));
        }
        Ok(())
    }
}

/// Row-major indices of the nonzero entries of a dense gain, largest
/// magnitude first; equal magnitudes keep row-major order.
#[derive(Clone, Debug)]
pub struct MagnitudeOrder {
    rows: usize,
    cols: usize,
    order: Vec<(usize, usize)>,
}

impl MagnitudeOrder {
    pub fn new(k: &Matrix) -> Self {
        let (rows, cols) = k.shape();
        let mut order: Vec<(usize, usize)> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .filter(|&(i, j)| k[(i, j)].abs() > ZERO_TOL)
            .collect();
        // stable sort keeps the row-major tie-break
        order.sort_by(|&a, &b| k[b].abs().total_cmp(&k[a].abs()));
        Self { rows, cols, order }
    }

    pub fn nnz(&self) -> usize {
        self.order.len()
    }

    /// Entries kept by `Π_ℓ`, in rank order.
    pub fn kept(&self, ell: usize) -> &[(usize, usize)] {
        &self.order[..ell.min(self.order.len())]
    }

    /// Rank (0-based) of each entry, `None` for structural zeros.
    pub fn ranks(&self) -> Vec<Option<usize>> {
        let mut ranks = vec![None; self.rows * self.cols];
        for (rank, &(i, j)) in self.order.iter().enumerate() {
            ranks[i * self.cols + j] = Some(rank);
        }
        ranks
    }

    pub fn prune(&self, k: &Matrix, ell: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for &(i, j) in self.kept(ell) {
            out[(i, j)] = k[(i, j)];
        }
        out
    }
}

/// `Π_ℓ`: keeps the `ℓ` largest-magnitude entries of `K_d`.
pub fn prune_by_magnitude(k_dense: &Matrix, ell: usize) -> Matrix {
    MagnitudeOrder::new(k_dense).prune(k_dense, ell)
}

/// `Π_{a,s}`: zeroes rows with `a_i = 0`, then columns with `s_j = 0`.
pub fn apply_masks(k: &Matrix, actuators: &[bool], sensors: &[bool]) -> Matrix {
    assert_eq!(actuators.len(), k.nrows(), "actuator mask length");
    assert_eq!(sensors.len(), k.ncols(), "sensor mask length");
    Matrix::from_fn(k.nrows(), k.ncols(), |i, j| if actuators[i] && sensors[j] { k[(i, j)] } else { 0.0 })
}

/// `K_s(θ) = Π_{a,s}(Π_ℓ(K_d))`.
pub fn realize(gene: &Gene, k_dense: &Matrix) -> Matrix {
    apply_masks(&prune_by_magnitude(k_dense, gene.ell), &gene.actuator_mask, &gene.sensor_mask)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralCounts {
    pub n_act: usize,
    pub n_sens: usize,
    pub n_comm: usize,
}

/// Subsystem-level controller adjacency: entry `(i, j)`, `i ≠ j`, is set when
/// sub-controller `i` reads any state of subsystem `j`.
pub fn controller_adjacency(k: &Matrix, partition: &Partition) -> Vec<Vec<bool>> {
    let n = partition.n_subsystems();
    let input_owner = partition.input_owner();
    let state_owner = partition.state_owner();
    let mut adj = vec![vec![false; n]; n];
    for r in 0..k.nrows() {
        for c in 0..k.ncols() {
            let (i, j) = (input_owner[r], state_owner[c]);
            if i != j && k[(r, c)].abs() > ZERO_TOL {
                adj[i][j] = true;
            }
        }
    }
    adj
}

/// Nonzero rows, nonzero columns and nonzero off-diagonal subsystem blocks of `K`.
pub fn structural_counts(k: &Matrix, partition: &Partition) -> StructuralCounts {
    let nz = |v: f64| v.abs() > ZERO_TOL;
    let n_act = (0..k.nrows()).filter(|&i| k.row(i).iter().any(|&v| nz(v))).count();
    let n_sens = (0..k.ncols()).filter(|&j| k.column(j).iter().any(|&v| nz(v))).count();
    let n_comm = controller_adjacency(k, partition).iter().flatten().filter(|&&e| e).count();
    StructuralCounts { n_act, n_sens, n_comm }
}

/// Penalties on actuators, sensors and communication links.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub w_a: f64,
    pub w_s: f64,
    pub w_c: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { w_a: 0.4, w_s: 0.2, w_c: 0.05 }
    }
}

impl Weights {
    pub fn structural(&self, c: StructuralCounts) -> f64 {
        self.w_a * c.n_act as f64 + self.w_s * c.n_sens as f64 + self.w_c * c.n_comm as f64
    }
}

/// A gain together with its co-design cost breakdown.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluatedController {
    #[serde(with = "dense_rows")]
    pub gain: Matrix,
    pub j_lqr: Cost,
    /// `J_LQR(K) / J_LQR(K_d)`.
    pub j_ratio: Cost,
    pub counts: StructuralCounts,
    pub j_ea: Cost,
    pub stable: bool,
    pub repaired: bool,
}

pub(crate) mod dense_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::lqr::Matrix;
    use crate::plant::{matrix_to_rows, rows_to_matrix};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        rows_to_matrix(&rows, "gain").map_err(serde::de::Error::custom)
    }
}

/// Everything needed to score genes on one plant: the LQR problem, the dense
/// gain and its cost, the weights and an optional repair stage.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub problem: LqrProblem,
    pub partition: Partition,
    pub k_dense: Matrix,
    pub j_dense: f64,
    pub weights: Weights,
    pub repair: Option<RepairConfig>,
    order: MagnitudeOrder,
}

impl Evaluator {
    /// Solves the dense LQR problem with `Q = I`, `R = I`, `Σ = I`.
    pub fn new(plant: &Plant, weights: Weights) -> Result<Self> {
        let problem = LqrProblem::identity_weights(plant.a.clone(), plant.b.clone())?;
        Self::from_problem(problem, plant.partition.clone(), weights)
    }

    pub fn from_problem(problem: LqrProblem, partition: Partition, weights: Weights) -> Result<Self> {
        let sol = problem.solve()?;
        Self::with_dense(problem, partition, sol.gain, sol.cost, weights)
    }

    pub fn with_dense(problem: LqrProblem, partition: Partition, k_dense: Matrix, j_dense: f64, weights: Weights) -> Result<Self> {
        if !(j_dense > 0.0 && j_dense.is_finite()) {
            return Err(Error::InvalidConfig(format!("dense cost must be positive and finite, got {j_dense}")));
        }
        if k_dense.shape() != (problem.n_inputs(), problem.n_states()) {
            return Err(Error::Dimension("dense gain shape".into()));
        }
        let order = MagnitudeOrder::new(&k_dense);
        Ok(Self { problem, partition, k_dense, j_dense, weights, repair: None, order })
    }

    pub fn with_repair(mut self, repair: Option<RepairConfig>) -> Self {
        self.repair = repair;
        self
    }

    pub fn n_states(&self) -> usize {
        self.problem.n_states()
    }

    pub fn n_inputs(&self) -> usize {
        self.problem.n_inputs()
    }

    pub fn magnitude_order(&self) -> &MagnitudeOrder {
        &self.order
    }

    pub fn nnz_dense(&self) -> usize {
        self.order.nnz()
    }

    pub fn realize(&self, gene: &Gene) -> Matrix {
        apply_masks(&self.order.prune(&self.k_dense, gene.ell), &gene.actuator_mask, &gene.sensor_mask)
    }

    /// Scores an explicit gain: `J_LQR(K)/J_LQR(K_d) + w_a N_a + w_s N_s + w_c N_c`,
    /// or `+inf` when `A + BK` is unstable.
    pub fn score_gain(&self, gain: Matrix, repaired: bool) -> Result<EvaluatedController> {
        let counts = structural_counts(&gain, &self.partition);
        let j_lqr = self.problem.cost(&gain)?;
        let stable = j_lqr.is_finite();
        let j_ratio = Cost::new(j_lqr.value() / self.j_dense);
        let j_ea = if stable { Cost::new(j_ratio.value() + self.weights.structural(counts)) } else { Cost::INFINITY };
        Ok(EvaluatedController { gain, j_lqr, j_ratio, counts, j_ea, stable, repaired })
    }

    /// Plain objective of `K_s(θ)`, without repair.
    pub fn evaluate_plain(&self, gene: &Gene) -> Result<EvaluatedController> {
        self.score_gain(self.realize(gene), false)
    }

    /// Objective of `K_s(θ)`; when repair is configured and `K_s(θ)` is
    /// unstable, the repaired gain is scored instead.
    pub fn evaluate(&self, gene: &Gene) -> Result<EvaluatedController> {
        match &self.repair {
            None => self.evaluate_plain(gene),
            Some(cfg) => repair::evaluate_with_repair(self, gene, cfg),
        }
    }
}

/// Free-function form of [`Evaluator::evaluate_plain`].
pub fn evaluate(gene: &Gene, plant: &Plant, k_dense: &Matrix, weights: Weights, j_dense: f64) -> Result<EvaluatedController> {
    let problem = LqrProblem::identity_weights(plant.a.clone(), plant.b.clone())?;
    Evaluator::with_dense(problem, plant.partition.clone(), k_dense.clone(), j_dense, weights)?.evaluate_plain(gene)
}
