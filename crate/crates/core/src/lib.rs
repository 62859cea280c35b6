//! Co-design of sparse state-feedback LQR controllers.
//!
//! A dense LQR gain is pruned by an evolutionary search over link count,
//! actuator mask and sensor mask, trading LQ cost against the number of
//! actuators, sensors and inter-subsystem communication links. Unstable
//! pruned gains can be repaired on their own sparsity pattern with a
//! Gershgorin-radius subgradient method, and the [`analysis`] module computes
//! the convergence and stability certificates for a run.

pub mod analysis;
pub mod cost;
pub mod ea;
pub mod error;
pub mod experiment;
pub mod genome;
pub mod lqr;
pub mod parallel;
pub mod plant;
pub mod repair;

pub use cost::Cost;
pub use error::{Error, Result};
pub use genome::{EvaluatedController, Evaluator, Gene, StructuralCounts, Weights};
pub use lqr::{LqrProblem, LqrSolution, Matrix};
pub use plant::{Plant, SystemGraph};
