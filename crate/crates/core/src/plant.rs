//! Networked LTI plants, their subsystem partition and topology graph, and
//! generators for linearized swing-equation test networks.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{spectral_radius, Matrix};

/// Entries with magnitude at or below this are treated as structural zeros.
pub const ZERO_TOL: f64 = 1e-12;

/// Assignment of state and input indices to subsystems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub states: Vec<Vec<usize>>,
    pub inputs: Vec<Vec<usize>>,
}

impl Partition {
    /// Every index `0..n_states` and `0..n_inputs` owned by exactly one subsystem.
    pub fn new(states: Vec<Vec<usize>>, inputs: Vec<Vec<usize>>, n_states: usize, n_inputs: usize) -> Result<Self> {
        if states.is_empty() || states.len() != inputs.len() {
            return Err(Error::InvalidPlant(format!(
                "partition needs N >= 1 subsystems with matching state/input groups ({} vs {})",
                states.len(),
                inputs.len()
            )));
        }
        check_cover(&states, n_states, "state")?;
        check_cover(&inputs, n_inputs, "input")?;
        Ok(Self { states, inputs })
    }

    /// `n` subsystems with `states_per` consecutive states and `inputs_per` consecutive inputs each.
    pub fn uniform(n: usize, states_per: usize, inputs_per: usize) -> Self {
        Self {
            states: (0..n).map(|i| (i * states_per..(i + 1) * states_per).collect()).collect(),
            inputs: (0..n).map(|i| (i * inputs_per..(i + 1) * inputs_per).collect()).collect(),
        }
    }

    pub fn n_subsystems(&self) -> usize {
        self.states.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.iter().map(Vec::len).sum()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.iter().map(Vec::len).sum()
    }

    /// Subsystem owning each state index.
    pub fn state_owner(&self) -> Vec<usize> {
        owner_map(&self.states, self.n_states())
    }

    /// Subsystem owning each input index.
    pub fn input_owner(&self) -> Vec<usize> {
        owner_map(&self.inputs, self.n_inputs())
    }
}

fn check_cover(groups: &[Vec<usize>], n: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; n];
    for &idx in groups.iter().flatten() {
        if idx >= n {
            return Err(Error::InvalidPlant(format!("{what} index {idx} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::InvalidPlant(format!("{what} index {idx} assigned twice")));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPlant(format!("{what} index {missing} not assigned")));
    }
    Ok(())
}

fn owner_map(groups: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut owner = vec![0; n];
    for (sub, group) in groups.iter().enumerate() {
        for &idx in group {
            owner[idx] = sub;
        }
    }
    owner
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantMetadata {
    pub kind: String,
    pub seed: Option<u64>,
    pub target_radius: Option<f64>,
}

/// `x⁺ = A x + B u` with a subsystem partition.
#[derive(Clone, Debug)]
pub struct Plant {
    pub a: Matrix,
    pub b: Matrix,
    pub partition: Partition,
    pub metadata: PlantMetadata,
}

impl Plant {
    pub fn new(a: Matrix, b: Matrix, partition: Partition, metadata: PlantMetadata) -> Result<Self> {
        let nx = a.nrows();
        if nx == 0 || a.ncols() != nx || b.nrows() != nx || b.ncols() == 0 {
            return Err(Error::InvalidPlant(format!(
                "inconsistent shapes A {}x{}, B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPlant("non-finite entries".into()));
        }
        let partition = Partition::new(partition.states, partition.inputs, nx, b.ncols())?;
        Ok(Self { a, b, partition, metadata })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_subsystems(&self) -> usize {
        self.partition.n_subsystems()
    }

    /// Multiplies `A` so that its spectral radius equals `target`; `B` is untouched.
    pub fn scale_to_radius(&mut self, target: f64) -> Result<()> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::InvalidConfig(format!("target radius must be positive, got {target}")));
        }
        let current = spectral_radius(&self.a)?;
        if current <= 0.0 {
            return Err(Error::InvalidPlant("cannot scale a nilpotent A to a positive radius".into()));
        }
        self.a *= target / current;
        self.metadata.target_radius = Some(target);
        Ok(())
    }

    pub fn graph(&self) -> SystemGraph {
        build_graph(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PlantFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: PlantFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk plant document. Matrices are dense, row-major, as arrays of rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantFile {
    pub n_subsystems: usize,
    pub state_partition: Vec<Vec<usize>>,
    pub input_partition: Vec<Vec<usize>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub metadata: PlantMetadata,
}

/// Row-major nested vectors, the on-disk matrix layout.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidPlant(format!("{what} has ragged rows")));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl From<&Plant> for PlantFile {
    fn from(p: &Plant) -> Self {
        Self {
            n_subsystems: p.n_subsystems(),
            state_partition: p.partition.states.clone(),
            input_partition: p.partition.inputs.clone(),
            a: matrix_to_rows(&p.a),
            b: matrix_to_rows(&p.b),
            metadata: p.metadata.clone(),
        }
    }
}

impl TryFrom<PlantFile> for Plant {
    type Error = Error;

    fn try_from(f: PlantFile) -> Result<Self> {
        if f.n_subsystems != f.state_partition.len() {
            return Err(Error::InvalidPlant(format!(
                "n_subsystems = {} but {} state groups",
                f.n_subsystems,
                f.state_partition.len()
            )));
        }
        let a = rows_to_matrix(&f.a, "A")?;
        let b = rows_to_matrix(&f.b, "B")?;
        Plant::new(a, b, Partition { states: f.state_partition, inputs: f.input_partition }, f.metadata)
    }
}

/// Shortest-path length in the system graph. `Unreachable` orders after every finite distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(usize),
    Unreachable,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unreachable => None,
        }
    }
}

/// Subsystem-level topology: directed adjacency (no self loops) and all-pairs hop distances.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemGraph {
    pub adjacency: Vec<Vec<bool>>,
    pub distances: Vec<Vec<Distance>>,
}

impl SystemGraph {
    pub fn from_adjacency(adjacency: Vec<Vec<bool>>) -> Self {
        let n = adjacency.len();
        let distances = (0..n).map(|src| bfs(&adjacency, src)).collect();
        Self { adjacency, distances }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> Distance {
        self.distances[i][j]
    }

    pub fn max_finite_distance(&self) -> usize {
        self.distances.iter().flatten().filter_map(|d| d.finite()).max().unwrap_or(0)
    }

    /// `N_Δ(r)`: number of ordered pairs `(i, j)` at distance `r`, for `r = 0..=max`.
    pub fn distance_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.max_finite_distance() + 1];
        for d in self.distances.iter().flatten().filter_map(|d| d.finite()) {
            counts[d] += 1;
        }
        counts
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].iter().filter(|&&e| e).count()
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.distances.iter().flatten().all(|d| *d != Distance::Unreachable)
    }
}

fn bfs(adjacency: &[Vec<bool>], src: usize) -> Vec<Distance> {
    let n = adjacency.len();
    let mut dist = vec![Distance::Unreachable; n];
    dist[src] = Distance::Finite(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let Distance::Finite(du) = dist[u] else { unreachable!() };
        for v in 0..n {
            if adjacency[u][v] && dist[v] == Distance::Unreachable {
                dist[v] = Distance::Finite(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Edge `i → j` whenever block `[A]_ij` or `[B]_ij` has a nonzero entry (`i ≠ j`).
pub fn build_graph(plant: &Plant) -> SystemGraph {
    let n = plant.n_subsystems();
    let part = &plant.partition;
    let mut adjacency = vec![vec![false; n]; n];
    for (i, row) in adjacency.iter_mut().enumerate() {
        for (j, edge) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let a_block = part.states[i]
                .iter()
                .any(|&r| part.states[j].iter().any(|&c| plant.a[(r, c)].abs() > ZERO_TOL));
            let b_block = part.states[i]
                .iter()
                .any(|&r| part.inputs[j].iter().any(|&c| plant.b[(r, c)].abs() > ZERO_TOL));
            *edge = a_block || b_block;
        }
    }
    SystemGraph::from_adjacency(adjacency)
}

/// Parameters of the linearized swing-equation network.
///
/// Per node: `θ̈ᵢ = −(dᵢ/mᵢ)θ̇ᵢ − Σⱼ (kᵢⱼ/mᵢ)(θᵢ − θⱼ) + uᵢ/mᵢ`, discretized by
/// explicit Euler with step `dt`.
///
/// The defaults make coupling dominate the local dynamics and give each
/// actuator a strong input channel. With weak coupling and `B = dt/m`, a
/// purely local controller is almost as good as the dense one and the zero
/// controller is within a factor of two of it, so there is little left to
/// co-design.
#[derive(Clone, Debug, PartialEq)]
pub struct SwingParams {
    pub dt: f64,
    pub inertia: (f64, f64),
    pub damping: (f64, f64),
    pub coupling: (f64, f64),
    /// Probability that each potential grid edge is kept.
    pub edge_retention: f64,
    /// Multiplier on the input channel, `B[ωᵢ, i] = input_gain · dt / mᵢ`.
    pub input_gain: f64,
}

impl Default for SwingParams {
    fn default() -> Self {
        Self { dt: 0.5, inertia: (1.0, 2.0), damping: (1.0, 2.0), coupling: (20.0, 40.0), edge_retention: 0.8, input_gain: 10.0 }
    }
}

/// Radius assigned to grid plants when no target is requested. The raw Euler
/// model always has the uniform-phase eigenvalue at exactly 1 (and the
/// defaults push fast inter-area modes above it), so grids are rescaled.
pub const DEFAULT_GRID_RADIUS: f64 = 0.99;

impl SwingParams {
    /// Assembles `(A, B)` for nodes with two states `(θ, ω)` and one input each.
    fn assemble(&self, n: usize, edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
        let inertia: Vec<f64> = (0..n).map(|_| rng.random_range(self.inertia.0..=self.inertia.1)).collect();
        let damping: Vec<f64> = (0..n).map(|_| rng.random_range(self.damping.0..=self.damping.1)).collect();
        let coupling: Vec<f64> = edges.iter().map(|_| rng.random_range(self.coupling.0..=self.coupling.1)).collect();

        let dt = self.dt;
        let mut a = Matrix::zeros(2 * n, 2 * n);
        let mut b = Matrix::zeros(2 * n, n);
        for i in 0..n {
            let (th, om) = (2 * i, 2 * i + 1);
            a[(th, th)] = 1.0;
            a[(th, om)] = dt;
            a[(om, om)] = 1.0 - dt * damping[i] / inertia[i];
            b[(om, i)] = self.input_gain * dt / inertia[i];
        }
        for (&(i, j), &k) in edges.iter().zip(&coupling) {
            for (p, q) in [(i, j), (j, i)] {
                let gain = dt * k / inertia[p];
                a[(2 * p + 1, 2 * p)] -= gain;
                a[(2 * p + 1, 2 * q)] += gain;
            }
        }
        (a, b)
    }
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![vec![false; n]; n];
    for &(i, j) in edges {
        adj[i][j] = true;
        adj[j][i] = true;
    }
    bfs(&adj, 0).iter().all(|d| *d != Distance::Unreachable)
}

/// Swing network on a `rows × cols` grid with randomly retained edges.
pub fn make_grid_swing(rows: usize, cols: usize, seed: u64, target_radius: Option<f64>) -> Result<Plant> {
    make_grid_swing_with(rows, cols, seed, target_radius, &SwingParams::default())
}

pub fn make_grid_swing_with(
    rows: usize,
    cols: usize,
    seed: u64,
    target_radius: Option<f64>,
    params: &SwingParams,
) -> Result<Plant> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidConfig(format!("grid must be at least 1x1, got {rows}x{cols}")));
    }
    let n = rows * cols;
    let mut candidates = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                candidates.push((i, i + 1));
            }
            if r + 1 < rows {
                candidates.push((i, i + cols));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = loop {
        let kept: Vec<_> = candidates
            .iter()
            .copied()
            .filter(|_| rng.random_bool(params.edge_retention))
            .collect();
        if connected(n, &kept) {
            break kept;
        }
    };
    let (a, b) = params.assemble(n, &edges, &mut rng);
    let metadata = PlantMetadata { kind: "grid".into(), seed: Some(seed), target_radius: None };
    let mut plant = Plant::new(a, b, Partition::uniform(n, 2, 1), metadata)?;
    plant.scale_to_radius(target_radius.unwrap_or(DEFAULT_GRID_RADIUS))?;
    plant.metadata.target_radius = target_radius;
    Ok(plant)
}

/// Bus labels of the IEEE 13-node test feeder, in subsystem order.
pub const IEEE13_BUSES: [u32; 13] = [650, 632, 633, 634, 645, 646, 671, 684, 611, 652, 680, 692, 675];

/// Feeder branches (lines, the 633–634 transformer and the 671–692 switch).
pub const IEEE13_BRANCHES: [(u32, u32); 12] = [
    (650, 632),
    (632, 633),
    (633, 634),
    (632, 645),
    (645, 646),
    (632, 671),
    (671, 684),
    (684, 611),
    (684, 652),
    (671, 680),
    (671, 692),
    (692, 675),
];

/// Swing network on the IEEE 13-bus feeder topology, scaled to `target_radius`.
pub fn make_ieee13(seed: u64, target_radius: f64) -> Result<Plant> {
    make_ieee13_with(seed, target_radius, &SwingParams::default())
}

pub fn make_ieee13_with(seed: u64, target_radius: f64, params: &SwingParams) -> Result<Plant> {
    let index = |bus: u32| IEEE13_BUSES.iter().position(|&b| b == bus).expect("bus in table");
    let edges: Vec<_> = IEEE13_BRANCHES.iter().map(|&(p, q)| (index(p), index(q))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = params.assemble(IEEE13_BUSES.len(), &edges, &mut rng);
    let metadata = PlantMetadata { kind: "ieee13".into(), seed: Some(seed), target_radius: None };
    let mut plant = Plant::new(a, b, Partition::uniform(IEEE13_BUSES.len(), 2, 1), metadata)?;
    plant.scale_to_radius(target_radius)?;
    Ok(plant)
}
