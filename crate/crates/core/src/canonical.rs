//! Solver for regular dimension-reduced canonical forms.
//!
//! The stationary path of the Lagrangian is `w(λ) = [I - λΔ]⁻¹(w0 + λd)`,
//! i.e. `z_i = δ_i / (1 - λγ_i)` and `y = λε`, and the secular function
//!
//! ```text
//! f(λ) = Σ γ_i δ_i² / (1 - λγ_i)² + 2ε²λ - k*
//! ```
//!
//! is the constraint evaluated along it. `f` is nondecreasing on the interior
//! of the admissible region, which makes a sign-change bracket sufficient.

use nalgebra::{DMatrix, DVector};

use crate::config::SolverConfig;
use crate::error::SolveError;
use crate::solution::{SetBlock, SolutionSet};
use crate::transforms::{CanonicalData, DrcfSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangianKind {
    NonLagrangian,
    MultiplyLagrangian,
    SinglyLagrangian,
}

impl LagrangianKind {
    pub fn label(self) -> &'static str {
        match self {
            LagrangianKind::NonLagrangian => "non-Lagrangian",
            LagrangianKind::MultiplyLagrangian => "multiply-Lagrangian",
            LagrangianKind::SinglyLagrangian => "singly-Lagrangian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianClass {
    pub kind: LagrangianKind,
    /// `|k*|` before snapping.
    pub k_star_margin: f64,
    /// Largest `δ_i` before snapping.
    pub delta_margin: f64,
    /// `ε` before snapping.
    pub epsilon_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecularContext {
    pub drcf: DrcfSpec,
    /// Closure of the admissible region; `lo` is `-inf` when `γ_q > 0`.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// `f̲`
    pub f_lo: f64,
    /// `f̄`
    pub f_hi: f64,
}

impl SecularContext {
    pub fn new(drcf: DrcfSpec) -> Self {
        let gq = drcf.gamma_min();
        let lambda_hi = 1.0 / drcf.gammas[0];
        let lambda_lo = if gq < 0.0 { 1.0 / gq } else { f64::NEG_INFINITY };
        let mut ctx = Self {
            drcf,
            lambda_lo,
            lambda_hi,
            f_lo: 0.0,
            f_hi: 0.0,
        };
        let (lo, hi) = secular_bounds(&ctx);
        ctx.f_lo = lo;
        ctx.f_hi = hi;
        ctx
    }

    /// `δ = 0` and `ε = 0`: the path and `f` do not depend on `λ`.
    pub fn is_constant(&self) -> bool {
        self.drcf.delta.iter().all(|&d| d == 0.0) && self.drcf.epsilon == 0.0
    }

    /// Pole locations `1/γ_i`.
    pub fn poles(&self) -> Vec<f64> {
        self.drcf.gammas.iter().map(|g| 1.0 / g).collect()
    }

    /// `f(λ)` without the domain check.
    pub fn eval(&self, lambda: f64) -> f64 {
        let d = &self.drcf;
        let mut s = 2.0 * d.epsilon * d.epsilon * lambda - d.k_star;
        for (g, delta) in d.gammas.iter().zip(&d.delta) {
            if *delta != 0.0 {
                let den = 1.0 - lambda * g;
                s += g * delta * delta / (den * den);
            }
        }
        s
    }

    /// Stationary point `w(λ)`.
    pub fn path(&self, lambda: f64) -> DVector<f64> {
        let d = &self.drcf;
        let mut w = Vec::with_capacity(d.n_bar());
        if d.has_null_var {
            w.push(lambda * d.epsilon);
        }
        for (g, delta) in d.gammas.iter().zip(&d.delta) {
            w.push(delta / (1.0 - lambda * g));
        }
        DVector::from_vec(w)
    }

    /// Whether `λ` is strictly inside the admissible region.
    pub fn in_interior(&self, lambda: f64) -> bool {
        lambda < self.lambda_hi && lambda > self.lambda_lo && (1.0 - lambda * self.drcf.gammas[0]) > 0.0
    }
}

fn pole_error(ctx: &SecularContext, lambda: f64) -> SolveError {
    let pole = if (lambda - ctx.lambda_hi).abs() <= (lambda - ctx.lambda_lo).abs() {
        ctx.lambda_hi
    } else {
        ctx.lambda_lo
    };
    SolveError::PoleProximity { lambda, pole }
}

/// `f(λ)`, defined only strictly inside the admissible region.
pub fn secular_f(ctx: &SecularContext, lambda: f64) -> Result<f64, SolveError> {
    if !lambda.is_finite() || !ctx.in_interior(lambda) {
        return Err(pole_error(ctx, lambda));
    }
    let v = ctx.eval(lambda);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(pole_error(ctx, lambda))
    }
}

/// `f₁ = Σ_{i≥2} γ_i δ_i² / (1 - γ_i/γ_1)² + 2ε²/γ_1 - k*`
fn f_boundary(d: &DrcfSpec, which: usize) -> f64 {
    let gw = d.gammas[which];
    let mut s = 2.0 * d.epsilon * d.epsilon / gw - d.k_star;
    for (i, (g, delta)) in d.gammas.iter().zip(&d.delta).enumerate() {
        if i != which && *delta != 0.0 {
            let den = 1.0 - g / gw;
            s += g * delta * delta / (den * den);
        }
    }
    s
}

/// `(f̲, f̄)`, the limits of `f` at the ends of the admissible interior.
pub fn secular_bounds(ctx: &SecularContext) -> (f64, f64) {
    let d = &ctx.drcf;
    if ctx.is_constant() {
        return (-d.k_star, -d.k_star);
    }
    let q = d.q();
    let f_hi = if d.delta[0] == 0.0 {
        f_boundary(d, 0)
    } else {
        f64::INFINITY
    };
    let f_lo = if d.gamma_min() < 0.0 {
        if d.delta[q - 1] == 0.0 {
            f_boundary(d, q - 1)
        } else {
            f64::NEG_INFINITY
        }
    } else if d.epsilon == 0.0 {
        -d.k_star
    } else {
        f64::NEG_INFINITY
    };
    (f_lo, f_hi)
}

pub fn classify_lagrangian(ctx: &SecularContext) -> LagrangianClass {
    let d = &ctx.drcf;
    let delta_zero = d.delta.iter().all(|&x| x == 0.0);
    let kind = if !d.has_null_var && d.k_star == 0.0 {
        if delta_zero {
            LagrangianKind::MultiplyLagrangian
        } else if d.gamma_min() > 0.0 {
            LagrangianKind::NonLagrangian
        } else {
            LagrangianKind::SinglyLagrangian
        }
    } else {
        LagrangianKind::SinglyLagrangian
    };
    LagrangianClass {
        kind,
        k_star_margin: d.raw_k_star.abs(),
        delta_margin: d.raw_delta.iter().copied().fold(0.0, f64::max),
        epsilon_margin: d.raw_epsilon,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseA {
    pub lambda: f64,
    pub w: DVector<f64>,
    /// `f(λ̂)`
    pub residual: f64,
    /// Final bracket.
    pub bracket: (f64, f64),
}

/// Finds the root of `f` inside the admissible interior.
///
/// Returns `Ok(None)` when `f̲ < 0 < f̄` fails.
pub fn solve_case_a(ctx: &SecularContext, cfg: &SolverConfig) -> Result<Option<CaseA>, SolveError> {
    if !(ctx.f_lo < 0.0 && ctx.f_hi > 0.0) || ctx.is_constant() {
        return Ok(None);
    }
    let d = &ctx.drcf;
    let pole_hi = ctx.lambda_hi;
    let h0 = cfg.pole_guard * pole_hi.abs() + 1e-12;

    let mut h = h0;
    let mut hi = pole_hi - h;
    let mut f_hi = ctx.eval(hi);
    let mut iters = 0;
    while f_hi <= 0.0 {
        h /= 4.0;
        let next = pole_hi - h;
        iters += 1;
        if iters > 200 || next >= pole_hi || !ctx.in_interior(next) {
            return Err(SolveError::BracketFailure {
                detail: format!("f stays nonpositive approaching 1/γ1 = {pole_hi} (last f = {f_hi:e})"),
            });
        }
        hi = next;
        f_hi = ctx.eval(hi);
    }

    let mut lo;
    let mut f_lo;
    if d.gamma_min() < 0.0 {
        let pole_lo = ctx.lambda_lo;
        let mut h = cfg.pole_guard * pole_lo.abs() + 1e-12;
        lo = pole_lo + h;
        f_lo = ctx.eval(lo);
        let mut iters = 0;
        while f_lo >= 0.0 {
            h /= 4.0;
            let next = pole_lo + h;
            iters += 1;
            if iters > 200 || next <= pole_lo || !ctx.in_interior(next) {
                return Err(SolveError::BracketFailure {
                    detail: format!("f stays nonnegative approaching 1/γq = {pole_lo} (last f = {f_lo:e})"),
                });
            }
            lo = next;
            f_lo = ctx.eval(lo);
        }
    } else {
        let step = pole_hi.abs().max(1.0);
        let mut j = 0;
        lo = hi - step;
        f_lo = ctx.eval(lo);
        while f_lo >= 0.0 {
            j += 1;
            if j > 1100 {
                return Err(SolveError::BracketFailure {
                    detail: format!("f stays nonnegative as λ decreases (last λ = {lo:e}, f = {f_lo:e})"),
                });
            }
            lo = hi - step * 2f64.powi(j);
            f_lo = ctx.eval(lo);
        }
    }
    if lo > hi {
        return Err(SolveError::BracketFailure {
            detail: format!("inverted bracket [{lo}, {hi}]"),
        });
    }

    // Bisection on the monotone branch.
    let mut a = lo;
    let mut b = hi;
    let (mut fa, mut fb) = (f_lo, f_hi);
    for _ in 0..2000 {
        let width = b - a;
        if width <= cfg.tol_lambda * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        let mid = a + 0.5 * width;
        if mid <= a || mid >= b {
            break;
        }
        let fm = ctx.eval(mid);
        if fm == 0.0 {
            a = mid;
            b = mid;
            fa = 0.0;
            fb = 0.0;
            break;
        }
        if fm < 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    let lambda = if fa.abs() <= fb.abs() { a } else { b };
    let residual = ctx.eval(lambda);
    Ok(Some(CaseA {
        lambda,
        w: ctx.path(lambda),
        residual,
        bracket: (a, b),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    B1,
    Bq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub which: Boundary,
    /// `ε/γ`, present when the drcf has a `y` variable.
    pub y_hat: Option<f64>,
    /// `ẑ` on every eigenvalue other than the boundary one, in order.
    pub z_fixed: Vec<f64>,
    /// `f₁` or `f_q`.
    pub f_val: f64,
    /// `ζ₁` or `ζ_q`.
    pub zeta: f64,
}

impl BoundaryData {
    /// Index of the boundary eigenvalue among the `q`.
    pub fn index(&self, q: usize) -> usize {
        match self.which {
            Boundary::B1 => 0,
            Boundary::Bq => q - 1,
        }
    }

    /// The solution with the boundary coordinate set to `sign · ζ`.
    pub fn point(&self, q: usize, sign: f64) -> DVector<f64> {
        let idx = self.index(q);
        let mut w = Vec::with_capacity(q + 1);
        if let Some(y) = self.y_hat {
            w.push(y);
        }
        let mut fixed = self.z_fixed.iter();
        for i in 0..q {
            if i == idx {
                w.push(sign * self.zeta);
            } else {
                w.push(*fixed.next().expect("q - 1 fixed coordinates"));
            }
        }
        DVector::from_vec(w)
    }
}

/// Boundary solutions at `λ = 1/γ_1` or `λ = 1/γ_q`, if any.
///
/// `sign_tol` is the tolerance of the sign test on `f₁` / `f_q`.
pub fn solve_boundary(ctx: &SecularContext, which: Boundary, sign_tol: f64) -> Option<BoundaryData> {
    let d = &ctx.drcf;
    let q = d.q();
    let idx = match which {
        Boundary::B1 => 0,
        Boundary::Bq => {
            if d.gamma_min() >= 0.0 {
                return None;
            }
            q - 1
        }
    };
    if d.delta[idx] != 0.0 {
        return None;
    }
    let g = d.gammas[idx];
    let f_val = f_boundary(d, idx);
    let ok = match which {
        Boundary::B1 => f_val <= sign_tol,
        Boundary::Bq => f_val >= -sign_tol,
    };
    if !ok {
        return None;
    }
    let z_fixed = (0..q)
        .filter(|&i| i != idx)
        .map(|i| d.delta[i] / (1.0 - d.gammas[i] / g))
        .collect();
    let zeta = ((-f_val / g).max(0.0)).sqrt();
    Some(BoundaryData {
        which,
        y_hat: d.has_null_var.then(|| d.epsilon / g),
        z_fixed,
        f_val,
        zeta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrcfBranch {
    NonLagrangian,
    MultiplyLagrangian,
    Interior,
    B1,
    Bq,
}

impl DrcfBranch {
    pub fn label(self) -> &'static str {
        match self {
            DrcfBranch::NonLagrangian => "origin (non-Lagrangian)",
            DrcfBranch::MultiplyLagrangian => "origin (multiply-Lagrangian)",
            DrcfBranch::Interior => "interior root",
            DrcfBranch::B1 => "boundary at 1/gamma_1",
            DrcfBranch::Bq => "boundary at 1/gamma_q",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrcfOutcome {
    pub l_star: f64,
    pub class: LagrangianClass,
    pub branch: DrcfBranch,
    /// Multiplier, when it is unique.
    pub lambda: Option<f64>,
    /// Base solution in drcf coordinates; the boundary coordinate (if any)
    /// holds `+ζ`.
    pub w_hat: DVector<f64>,
    /// Boundary data when a boundary branch was taken.
    pub boundary: Option<BoundaryData>,
    pub case_a: Option<CaseA>,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl DrcfOutcome {
    /// All drcf solutions (one or two points).
    pub fn solutions(&self, q: usize) -> Vec<DVector<f64>> {
        match &self.boundary {
            Some(b) if b.zeta > 0.0 => vec![b.point(q, 1.0), b.point(q, -1.0)],
            _ => vec![self.w_hat.clone()],
        }
    }
}

/// Solves a regular drcf.
pub fn solve_drcf(drcf: &DrcfSpec, cfg: &SolverConfig) -> Result<DrcfOutcome, SolveError> {
    let ctx = SecularContext::new(drcf.clone());
    let class = classify_lagrangian(&ctx);
    let d = &ctx.drcf;
    let q = d.q();
    let sign_tol = cfg.tol_secular * (1.0 + d.k_star.abs());
    let base = |branch, l_star, lambda, w_hat, boundary, case_a| DrcfOutcome {
        l_star,
        class: class.clone(),
        branch,
        lambda,
        w_hat,
        boundary,
        case_a,
        f_lo: ctx.f_lo,
        f_hi: ctx.f_hi,
    };

    match class.kind {
        LagrangianKind::NonLagrangian => {
            let l_star = d.delta.iter().map(|x| x * x).sum();
            return Ok(base(
                DrcfBranch::NonLagrangian,
                l_star,
                None,
                DVector::zeros(d.n_bar()),
                None,
                None,
            ));
        }
        LagrangianKind::MultiplyLagrangian => {
            return Ok(base(
                DrcfBranch::MultiplyLagrangian,
                0.0,
                None,
                DVector::zeros(d.n_bar()),
                None,
                None,
            ));
        }
        LagrangianKind::SinglyLagrangian => {}
    }

    let lengths: Vec<f64> = d.gammas.iter().zip(&d.delta).map(|(g, x)| x * g.abs()).collect();
    let boundary_loss = |bd: &BoundaryData| {
        let idx = bd.index(q);
        let g = d.gammas[idx];
        let mut s = d.epsilon * d.epsilon;
        for i in (0..q).filter(|&i| i != idx) {
            let den = 1.0 - d.gammas[i] / g;
            s += lengths[i] * lengths[i] / (den * den);
        }
        s / (g * g) + bd.zeta * bd.zeta
    };
    let finish_boundary = |bd: BoundaryData| {
        let branch = match bd.which {
            Boundary::B1 => DrcfBranch::B1,
            Boundary::Bq => DrcfBranch::Bq,
        };
        let lambda = 1.0 / d.gammas[bd.index(q)];
        base(branch, boundary_loss(&bd), Some(lambda), bd.point(q, 1.0), Some(bd), None)
    };

    let use_b1 = ctx.f_hi <= sign_tol;
    let use_bq = !use_b1 && d.gamma_min() < 0.0 && ctx.f_lo >= -sign_tol;
    if use_b1 || use_bq {
        let which = if use_b1 { Boundary::B1 } else { Boundary::Bq };
        return match solve_boundary(&ctx, which, sign_tol) {
            Some(bd) => Ok(finish_boundary(bd)),
            None => Err(SolveError::BracketFailure {
                detail: format!(
                    "bounds (f_lo, f_hi) = ({:e}, {:e}) select {:?} but its set is empty",
                    ctx.f_lo, ctx.f_hi, which
                ),
            }),
        };
    }

    match solve_case_a(&ctx, cfg)? {
        Some(ca) => {
            let lam = ca.lambda;
            let mut s = d.epsilon * d.epsilon;
            for (g, l) in d.gammas.iter().zip(&lengths) {
                let den = 1.0 - lam * g;
                s += l * l / (den * den);
            }
            let l_star = lam * lam * s;
            Ok(base(DrcfBranch::Interior, l_star, Some(lam), ca.w.clone(), None, Some(ca)))
        }
        None => Err(SolveError::BracketFailure {
            detail: format!(
                "no sign change: (f_lo, f_hi) = ({:e}, {:e}) with constant = {}",
                ctx.f_lo,
                ctx.f_hi,
                ctx.is_constant()
            ),
        }),
    }
}

/// Lifts a drcf solution to the canonical coordinates of `data`.
///
/// Eigenvalue blocks with `δ_i > 0` are pinned at `ẑ_i u`; blocks with
/// `δ_i = 0` and `ẑ_i != 0` are free on a sphere of radius `|ẑ_i|` (a sign
/// pair when the block has dimension one). The null block is `ŷ u`.
pub fn lift_to_canonical(outcome: &DrcfOutcome, drcf: &DrcfSpec, data: &CanonicalData) -> SolutionSet {
    let n = data.n();
    let mut base = DVector::zeros(n);
    let mut blocks = Vec::new();
    let off = drcf.z_offset();
    if drcf.has_null_var {
        base[0] = outcome.w_hat[0];
    }
    for i in 0..drcf.q() {
        let z = outcome.w_hat[off + i];
        let start = data.block_start(i);
        let m = data.multiplicities[i];
        if drcf.delta[i] > 0.0 {
            base[start] = z;
        } else if z != 0.0 {
            if m == 1 {
                let mut axis = DVector::zeros(n);
                axis[start] = 1.0;
                blocks.push(SetBlock::SignPair {
                    axis,
                    magnitude: z.abs(),
                });
            } else {
                let mut basis = DMatrix::zeros(n, m);
                for j in 0..m {
                    basis[(start + j, j)] = 1.0;
                }
                blocks.push(SetBlock::Sphere { basis, radius: z.abs() });
            }
        }
    }
    SolutionSet::with_blocks(base, blocks, outcome.l_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn drcf(gammas: &[f64], delta: &[f64], epsilon: f64, k_star: f64) -> DrcfSpec {
        DrcfSpec {
            gammas: gammas.to_vec(),
            delta: delta.to_vec(),
            epsilon,
            k_star,
            has_null_var: epsilon > 0.0,
            dropped_null_block: false,
            raw_delta: delta.to_vec(),
            raw_epsilon: epsilon,
            raw_k_star: k_star,
        }
    }

    fn worked_definite() -> DrcfSpec {
        drcf(&[2.0, 1.0, 1.0 / 3.0], &[3.0 / 10f64.sqrt(), 1.0, (3.0f64 / 5.0).sqrt()], 0.0, 1.0)
    }

    #[test]
    fn worked_definite_secular_values() {
        let ctx = SecularContext::new(worked_definite());
        assert!((secular_f(&ctx, 0.0).unwrap() - 2.0).abs() < 1e-14);
        // the printed form
        let lam: f64 = -0.3;
        let printed = 9.0 / (5.0 * (1.0 - 2.0 * lam).powi(2)) + 1.0 / (1.0 - lam).powi(2) + 9.0 / (5.0 * (3.0 - lam).powi(2)) - 1.0;
        assert!((secular_f(&ctx, lam).unwrap() - printed).abs() < 1e-14);
        assert_eq!(ctx.f_lo, -1.0);
        assert_eq!(ctx.f_hi, f64::INFINITY);
        assert!(matches!(secular_f(&ctx, 0.5), Err(SolveError::PoleProximity { .. })));
        assert!(matches!(secular_f(&ctx, 0.7), Err(SolveError::PoleProximity { .. })));
    }

    #[test]
    fn worked_definite_root() {
        let out = solve_drcf(&worked_definite(), &cfg()).unwrap();
        assert_eq!(out.class.kind, LagrangianKind::SinglyLagrangian);
        assert_eq!(out.branch, DrcfBranch::Interior);
        let lam = out.lambda.unwrap();
        assert!((lam - (-0.5271450584683184)).abs() < 1e-10);
        assert!((out.l_star - 0.3696030).abs() < 1e-6);
        let ctx = SecularContext::new(worked_definite());
        assert!(secular_f(&ctx, lam).unwrap().abs() < 1e-10);
    }

    #[test]
    fn constant_case() {
        let ctx = SecularContext::new(drcf(&[1.0], &[0.0], 0.0, 1.0));
        assert!(ctx.is_constant());
        assert_eq!(secular_f(&ctx, -3.0).unwrap(), -1.0);
        assert_eq!(secular_f(&ctx, 0.2).unwrap(), -1.0);
        assert_eq!((ctx.f_lo, ctx.f_hi), (-1.0, -1.0));
    }

    #[test]
    fn hyperbola_bounds() {
        for k in [-0.5, 0.25] {
            let ctx = SecularContext::new(drcf(&[1.0, -1.0], &[0.0, 0.0], 0.0, k));
            assert_eq!((ctx.f_lo, ctx.f_hi), (-k, -k));
        }
    }

    #[test]
    fn lagrangian_classes() {
        let c = |d: DrcfSpec| classify_lagrangian(&SecularContext::new(d)).kind;
        assert_eq!(c(drcf(&[1.0], &[1.0], 0.0, 0.0)), LagrangianKind::NonLagrangian);
        assert_eq!(c(drcf(&[1.0], &[0.0], 0.0, 0.0)), LagrangianKind::MultiplyLagrangian);
        assert_eq!(c(drcf(&[1.0, -1.0], &[0.0, 0.0], 0.0, 0.0)), LagrangianKind::MultiplyLagrangian);
        assert_eq!(c(drcf(&[1.0, -1.0], &[1.0, 0.0], 0.0, 0.0)), LagrangianKind::SinglyLagrangian);
        assert_eq!(c(worked_definite()), LagrangianKind::SinglyLagrangian);
        assert_eq!(c(drcf(&[1.0], &[0.0], 1.0, 0.0)), LagrangianKind::SinglyLagrangian);
    }

    #[test]
    fn non_lagrangian_solution() {
        let out = solve_drcf(&drcf(&[1.0], &[1.0], 0.0, 0.0), &cfg()).unwrap();
        assert_eq!(out.branch, DrcfBranch::NonLagrangian);
        assert_eq!(out.l_star, 1.0);
        assert_eq!(out.w_hat, DVector::zeros(1));
        assert_eq!(out.lambda, None);
    }

    #[test]
    fn single_pinned_root() {
        let out = solve_drcf(&drcf(&[1.0], &[2.0], 0.0, 1.0), &cfg()).unwrap();
        assert!((out.lambda.unwrap() + 1.0).abs() < 1e-12);
        assert!((out.w_hat[0] - 1.0).abs() < 1e-12);
        assert!((out.l_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parabolic_target_on_conic() {
        let out = solve_drcf(&drcf(&[1.0], &[0.0], 1.0, 0.0), &cfg()).unwrap();
        assert_eq!(out.branch, DrcfBranch::Interior);
        assert!(out.lambda.unwrap().abs() < 1e-12);
        assert!(out.w_hat.amax() < 1e-12);
        assert!(out.l_star < 1e-24);
    }

    #[test]
    fn sphere_boundary() {
        let ctx = SecularContext::new(drcf(&[1.0], &[0.0], 0.0, 1.0));
        let bd = solve_boundary(&ctx, Boundary::B1, 1e-10).unwrap();
        assert_eq!(bd.zeta, 1.0);
        assert!(solve_boundary(&ctx, Boundary::Bq, 1e-10).is_none());
        let out = solve_drcf(&ctx.drcf, &cfg()).unwrap();
        assert_eq!(out.branch, DrcfBranch::B1);
        assert_eq!(out.l_star, 1.0);
        let sols = out.solutions(1);
        assert_eq!(sols.len(), 2);
        assert_eq!(sols[0][0], 1.0);
        assert_eq!(sols[1][0], -1.0);
    }

    #[test]
    fn hyperbola_flip() {
        let k: f64 = 0.01;
        let out = solve_drcf(&drcf(&[1.0, -1.0], &[0.0, 0.0], 0.0, k), &cfg()).unwrap();
        assert_eq!(out.branch, DrcfBranch::B1);
        assert!((out.w_hat[0] - k.sqrt()).abs() < 1e-15 && out.w_hat[1] == 0.0);
        let out = solve_drcf(&drcf(&[1.0, -1.0], &[0.0, 0.0], 0.0, -k), &cfg()).unwrap();
        assert_eq!(out.branch, DrcfBranch::Bq);
        assert!((out.w_hat[1] - k.sqrt()).abs() < 1e-15 && out.w_hat[0] == 0.0);
        let out = solve_drcf(&drcf(&[1.0, -1.0], &[0.0, 0.0], 0.0, 0.0), &cfg()).unwrap();
        assert_eq!(out.branch, DrcfBranch::MultiplyLagrangian);
        assert_eq!(out.l_star, 0.0);
    }

    fn random_singly(rng: &mut ChaCha8Rng) -> DrcfSpec {
        loop {
            let q = rng.random_range(1..5);
            let mut gammas: Vec<f64> = (0..q).map(|_| rng.random_range(-3.0..3.0)).collect();
            gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if gammas[0] <= 0.1 || gammas.windows(2).any(|w| w[0] - w[1] < 0.05) || gammas.iter().any(|g| g.abs() < 0.05) {
                continue;
            }
            let delta: Vec<f64> = (0..q)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..2.0) })
                .collect();
            let eps = if rng.random_bool(0.3) { rng.random_range(0.1..2.0) } else { 0.0 };
            let k = rng.random_range(-3.0..3.0);
            let d = drcf(&gammas, &delta, eps, k);
            // feasibility of the drcf
            let feasible = eps > 0.0 || d.gamma_min() < 0.0 || k > 0.0;
            let ctx = SecularContext::new(d.clone());
            if feasible && classify_lagrangian(&ctx).kind == LagrangianKind::SinglyLagrangian && !ctx.is_constant() {
                return d;
            }
        }
    }

    #[test]
    fn monotone_on_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let d = random_singly(&mut rng);
            let ctx = SecularContext::new(d);
            let hi = ctx.lambda_hi;
            let lo = if ctx.lambda_lo.is_finite() { ctx.lambda_lo } else { hi - 20.0 };
            for _ in 0..100 {
                let a = rng.random_range(lo..hi);
                let b = rng.random_range(lo..hi);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                if a == b || !ctx.in_interior(a) || !ctx.in_interior(b) {
                    continue;
                }
                assert!(secular_f(&ctx, a).unwrap() <= secular_f(&ctx, b).unwrap());
            }
        }
    }

    #[test]
    fn solutions_satisfy_optimality_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let d = random_singly(&mut rng);
            let out = solve_drcf(&d, &cfg()).unwrap();
            let lam = out.lambda.unwrap();
            let diag = d.delta_diag();
            let w0 = d.w0();
            let dv = d.d();
            let scale = 1.0 + w0.amax() + d.k_star.abs() + d.epsilon;
            for w in out.solutions(d.q()) {
                // normal equations [I - λΔ]w = w0 + λd
                for i in 0..d.n_bar() {
                    let lhs = (1.0 - lam * diag[i]) * w[i];
                    assert!((lhs - (w0[i] + lam * dv[i])).abs() <= 1e-8 * scale);
                    // Hessian factor
                    assert!(1.0 - lam * diag[i] >= -1e-12);
                }
                assert!(d.constraint(&w).abs() <= 1e-8 * scale * (1.0 + w.norm_squared()));
                assert!((d.loss(&w) - out.l_star).abs() <= 1e-8 * (1.0 + out.l_star));
            }
        }
    }

    #[test]
    fn exactly_one_branch_is_nonempty() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = random_singly(&mut rng);
            let ctx = SecularContext::new(d);
            let tol = 1e-10 * (1.0 + ctx.drcf.k_star.abs());
            let interior = ctx.f_lo < -tol && ctx.f_hi > tol;
            let b1 = solve_boundary(&ctx, Boundary::B1, tol).is_some();
            let bq = solve_boundary(&ctx, Boundary::Bq, tol).is_some();
            let count = usize::from(interior) + usize::from(b1) + usize::from(bq);
            assert_eq!(count, 1, "f_lo {} f_hi {}", ctx.f_lo, ctx.f_hi);
        }
    }

    #[test]
    fn constant_path_iff_delta_and_eps_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let d = random_singly(&mut rng);
            let ctx = SecularContext::new(d);
            let a = ctx.lambda_hi - 0.7 * ctx.lambda_hi.abs().max(1.0);
            let b = ctx.lambda_hi - 0.3 * ctx.lambda_hi.abs().max(1.0);
            if !ctx.in_interior(a) || !ctx.in_interior(b) {
                continue;
            }
            assert_eq!(ctx.path(a) == ctx.path(b), ctx.is_constant());
        }
        let ctx = SecularContext::new(drcf(&[2.0, -1.0], &[0.0, 0.0], 0.0, 1.0));
        assert_eq!(ctx.path(0.1), ctx.path(-0.4));
    }
}
