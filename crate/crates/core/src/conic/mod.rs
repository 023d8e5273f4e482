//! In-house dense solvers for the continuous block of the selection problem.

mod admm;
mod feasibility;
mod ipm;
mod iterate;
mod problem;
mod solve;

pub use admm::{ConicSolution, SolveStatus, SolverMethod, SolverSettings, WarmStart};
pub use feasibility::{check_feasibility, ConstraintCheck, FeasibilityReport};
pub use iterate::DualIterate;
pub use problem::{ConicProblem, XBlock};
pub use solve::solve;

pub use crate::linalg::project_psd;
