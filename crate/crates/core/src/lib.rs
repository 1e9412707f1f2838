//! Global minimisation of a convex least-squares loss `(x - t)'A(x - t)`
//! over a quadric `x'Bx + 2b'x = k` (or the sublevel set `<= k`).

pub mod canonical;
pub mod config;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod psd;
pub mod solution;
pub mod solver;
pub mod transforms;

pub use config::SolverConfig;
pub use error::{InfeasibleCase, LinalgError, SolveError};
pub use linalg::SymMatrix;
pub use problem::{ProblemSpec, Sense};
pub use solution::{SetBlock, SolutionSet};
pub use solver::{solve, solve_equality, solve_inequality, SolveReport, TraceEntry};
