use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },
    #[error("Jacobi iteration on {matrix} did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence {
        matrix: String,
        sweeps: usize,
        off_norm: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Which of the three ways the constraint `Q(x) = 0` can fail to have a root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfeasibleCase {
    /// `B = O`, `b_perp = 0`, `k_plus != 0`: the constraint is a nonzero constant.
    I,
    /// `B` nonsingular and `-k_plus B` positive definite.
    II,
    /// `B != O` singular, `b_perp = 0`, `k_plus != 0` and `k_plus B` has no
    /// positive eigenvalue.
    III,
}

impl InfeasibleCase {
    pub fn label(self) -> &'static str {
        match self {
            InfeasibleCase::I => "I",
            InfeasibleCase::II => "II",
            InfeasibleCase::III => "III",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            InfeasibleCase::I => "constraint reduces to a nonzero constant",
            InfeasibleCase::II => "definite quadratic form cannot reach the level",
            InfeasibleCase::III => "singular semi-definite form cannot reach the level",
        }
    }
}

impl fmt::Display for InfeasibleCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case ({}): {}", self.label().to_lowercase(), self.description())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid solver configuration: {field} must be finite and positive")]
    InvalidConfig { field: &'static str },
    #[error("objective matrix is zero")]
    ZeroObjective,
    #[error("objective matrix is not positive semi-definite (eigenvalue {min_eigenvalue:e})")]
    NonConvexObjective { min_eigenvalue: f64 },
    #[error("constraint has no feasible point: {case}")]
    Infeasible { case: InfeasibleCase },
    #[error("transform is singular or too ill-conditioned (condition estimate {condition:e})")]
    SingularTransform { condition: f64 },
    #[error("no positive eigenvalue in the constraint matrix")]
    NoPositiveEigenvalue,
    #[error("multiplier {lambda} is within the pole guard of 1/gamma = {pole}")]
    PoleProximity { lambda: f64, pole: f64 },
    #[error("secular root bracketing failed: {detail}")]
    BracketFailure { detail: String },
    #[error("infimum is not attained; the solution set is empty")]
    NotAttained,
}
