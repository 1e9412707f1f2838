//! The problem data `(A, B, t, b, k)` and its constraint sense.
//!
//! A problem asks for the infimum of `L(x) = (x-t)' A (x-t)` over the conic
//! `Q(x) = x' B x + 2 b' x - k = 0` (or `<= 0`), with `A` positive
//! semi-definite and nonzero.

use nalgebra::DVector;

use crate::config::SolverConfig;
use crate::error::{InfeasibleCase, SolveError};
use crate::linalg::{self, spectral_decompose_named, Spectrum, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Equality,
    LessEqual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// `A`, positive semi-definite and nonzero.
    pub objective: SymMatrix,
    /// `t`, the point the loss is centred on.
    pub target: DVector<f64>,
    /// `B`, quadratic part of the constraint.
    pub quadratic: SymMatrix,
    /// `b`, half the linear part of the constraint.
    pub linear: DVector<f64>,
    /// `k`, the constraint level.
    pub level: f64,
    pub sense: Sense,
}

impl ProblemSpec {
    pub fn new(
        objective: SymMatrix,
        target: DVector<f64>,
        quadratic: SymMatrix,
        linear: DVector<f64>,
        level: f64,
        sense: Sense,
    ) -> Result<Self, SolveError> {
        let n = objective.dim();
        let check = |what, found| {
            if found == n {
                Ok(())
            } else {
                Err(SolveError::DimensionMismatch {
                    what,
                    expected: n,
                    found,
                })
            }
        };
        check("target", target.len())?;
        check("constraint matrix", quadratic.dim())?;
        check("linear term", linear.len())?;
        if !level.is_finite() || target.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
            return Err(SolveError::Linalg(crate::error::LinalgError::NonFinite));
        }
        Ok(Self {
            objective,
            target,
            quadratic,
            linear,
            level,
            sense,
        })
    }

    /// Equality-constrained problem from plain row slices; mostly for tests.
    pub fn from_rows(
        a: &[Vec<f64>],
        t: &[f64],
        b_mat: &[Vec<f64>],
        b: &[f64],
        k: f64,
    ) -> Result<Self, SolveError> {
        Self::new(
            SymMatrix::from_rows(a)?,
            DVector::from_column_slice(t),
            SymMatrix::from_rows(b_mat)?,
            DVector::from_column_slice(b),
            k,
            Sense::Equality,
        )
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn loss(&self, x: &DVector<f64>) -> f64 {
        eval_loss(self, x)
    }

    pub fn constraint(&self, x: &DVector<f64>) -> f64 {
        eval_constraint(self, x)
    }

    /// Magnitude of the constraint terms at `x`, `1 + |x'Bx| + 2|b'x| + |k|`,
    /// used to judge feasibility residuals.
    pub fn constraint_scale(&self, x: &DVector<f64>) -> f64 {
        1.0 + self.quadratic.quad_form(x).abs() + 2.0 * self.linear.dot(x).abs() + self.level.abs()
    }

    /// Largest magnitude among all problem entries, at least 1.
    pub fn scale(&self) -> f64 {
        self.objective
            .scale()
            .max(self.quadratic.scale())
            .max(linalg::vec_scale(&self.target))
            .max(linalg::vec_scale(&self.linear))
            .max(self.level.abs())
    }

    pub fn negated(&self) -> Self {
        negate_constraint(self)
    }
}

/// `(x - t)' A (x - t)`
pub fn eval_loss(p: &ProblemSpec, x: &DVector<f64>) -> f64 {
    let d = x - &p.target;
    p.objective.quad_form(&d)
}

/// `x' B x + 2 b' x - k`
pub fn eval_constraint(p: &ProblemSpec, x: &DVector<f64>) -> f64 {
    p.quadratic.quad_form(x) + 2.0 * p.linear.dot(x) - p.level
}

/// `(B, b, k) -> (-B, -b, -k)`. Leaves an equality problem unchanged and turns
/// `Q <= 0` into `Q >= 0`.
pub fn negate_constraint(p: &ProblemSpec) -> ProblemSpec {
    ProblemSpec {
        objective: p.objective.clone(),
        target: p.target.clone(),
        quadratic: p.quadratic.neg(),
        linear: -&p.linear,
        level: -p.level,
        sense: p.sense,
    }
}

#[derive(Debug, Clone)]
pub struct Validation {
    /// Numeric rank of `A`.
    pub rank: usize,
    pub n: usize,
    pub objective_spectrum: Spectrum,
    /// Smallest nonzero eigenvalue of `A` relative to its scale, a measure of
    /// how close the rank decision was.
    pub rank_gap: f64,
    /// Signature `(positive, zero, negative)` of `B`.
    pub quad_signature: (usize, usize, usize),
    pub quad_is_zero: bool,
}

/// Checks dimensions, `A != O` and convexity, and reports the rank of `A`.
pub fn validate(p: &ProblemSpec, cfg: &SolverConfig) -> Result<Validation, SolveError> {
    let n = p.dim();
    for (what, found) in [
        ("target", p.target.len()),
        ("constraint matrix", p.quadratic.dim()),
        ("linear term", p.linear.len()),
    ] {
        if found != n {
            return Err(SolveError::DimensionMismatch {
                what,
                expected: n,
                found,
            });
        }
    }
    let spec = spectral_decompose_named(&p.objective, cfg.tol_cluster, "objective matrix A")?;
    let cut = cfg.tol_rank * spec.scale();
    let min = spec.values.last().copied().unwrap_or(0.0);
    if min < -cut {
        return Err(SolveError::NonConvexObjective { min_eigenvalue: min });
    }
    let rank = linalg::numeric_rank(&spec, cfg.tol_rank);
    if rank == 0 {
        return Err(SolveError::ZeroObjective);
    }
    let rank_gap = spec.values[rank - 1] / spec.scale();

    let bspec = spectral_decompose_named(&p.quadratic, cfg.tol_cluster, "constraint matrix B")?;
    let quad_signature = bspec.signature(cfg.tol_rank);
    Ok(Validation {
        rank,
        n,
        objective_spectrum: spec,
        rank_gap,
        quad_signature,
        quad_is_zero: quad_signature.1 == n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible(InfeasibleCase),
}

#[derive(Debug, Clone)]
pub struct FeasibilityAnalysis {
    /// `B⁻ b`
    pub x_b: DVector<f64>,
    /// Component of `b` in the null space of `B`.
    pub b_perp: DVector<f64>,
    /// `k + b' B⁻ b`
    pub k_plus: f64,
    /// Signature `(positive, zero, negative)` of `B`.
    pub signature: (usize, usize, usize),
    pub verdict: Feasibility,
    /// `|b_perp|_∞` relative to its zero threshold scale.
    pub b_perp_margin: f64,
    /// `|k_plus|` relative to its zero threshold scale.
    pub k_plus_margin: f64,
}

impl FeasibilityAnalysis {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Feasibility::Feasible
    }

    /// Sign of `k_plus` after the tolerant zero test.
    pub fn k_plus_sign(&self, tol: f64) -> i8 {
        if self.k_plus_margin <= tol {
            0
        } else if self.k_plus > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Decides whether `x'Bx + 2b'x - k = 0` has a real solution.
///
/// Uses the identity `Q(x) = (x+x_b)'B(x+x_b) + 2 b_perp'(x+x_b) - k_plus`:
/// the conic is empty exactly when the quadratic part can never reach
/// `k_plus` and there is no linear escape direction.
pub fn feasibility_check(
    b_mat: &SymMatrix,
    b: &DVector<f64>,
    k: f64,
    cfg: &SolverConfig,
) -> Result<FeasibilityAnalysis, SolveError> {
    let spec = spectral_decompose_named(b_mat, cfg.tol_cluster, "constraint matrix B")?;
    let (x_b, b_perp) = linalg::mp_split_with(&spec, b, cfg.tol_rank);
    let k_plus = k + b.dot(&x_b);
    let (pos, zero, neg) = spec.signature(cfg.tol_rank);
    let n = spec.dim();

    let b_perp_margin = b_perp.amax() / linalg::vec_scale(b);
    let k_plus_margin = k_plus.abs() / (1.0_f64).max(k.abs()).max(b.dot(&x_b).abs());
    let b_perp_zero = b_perp_margin <= cfg.tol_class;
    let k_plus_zero = k_plus_margin <= cfg.tol_class;

    let verdict = if zero == n {
        if b_perp_zero && !k_plus_zero {
            Feasibility::Infeasible(InfeasibleCase::I)
        } else {
            Feasibility::Feasible
        }
    } else if zero == 0 {
        let definite_against = !k_plus_zero && ((k_plus > 0.0 && neg == n) || (k_plus < 0.0 && pos == n));
        if definite_against {
            Feasibility::Infeasible(InfeasibleCase::II)
        } else {
            Feasibility::Feasible
        }
    } else {
        let no_positive = (k_plus > 0.0 && pos == 0) || (k_plus < 0.0 && neg == 0);
        if b_perp_zero && !k_plus_zero && no_positive {
            Feasibility::Infeasible(InfeasibleCase::III)
        } else {
            Feasibility::Feasible
        }
    };

    Ok(FeasibilityAnalysis {
        x_b,
        b_perp,
        k_plus,
        signature: (pos, zero, neg),
        verdict,
        b_perp_margin,
        k_plus_margin,
    })
}
