//! A dense primal-dual interior-point solver for semidefinite programs with
//! free scalars and an optional log-determinant reward.

pub mod certify;
mod error;
pub mod linalg;
mod problem;
pub mod sdpa;
mod solver;

pub use error::SdpError;
pub use problem::{BlockSpec, Constraint, Entry, LogDet, Objective, SdpProblem};
pub use solver::{solve, SdpSolution, SolveStatus, SolverSettings};
