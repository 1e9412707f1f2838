//! Entry points: dispatch a problem through the reductions and assemble the
//! report.

use nalgebra::{DMatrix, DVector};

use crate::canonical::{self, DrcfOutcome, LagrangianKind};
use crate::config::SolverConfig;
use crate::error::SolveError;
use crate::linalg::{self, spectral_decompose_named, SymMatrix};
use crate::problem::{feasibility_check, validate, ProblemSpec, Sense};
use crate::psd::{self, PsdCase, PsdClassification, SublevelFiber};
use crate::solution::{SetBlock, SolutionSet};
use crate::transforms::{self, AffineMap, CanonicalData, DrcfSpec, SimplifiedFormData, TransformChain};

/// One tolerant decision taken during a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub stage: String,
    pub decision: String,
    pub margins: Vec<(String, f64)>,
}

impl TraceEntry {
    fn new(stage: &str, decision: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            decision: decision.into(),
            margins: Vec::new(),
        }
    }

    fn margin(mut self, name: &str, value: f64) -> Self {
        self.margins.push((name.into(), value));
        self
    }
}

#[derive(Debug, Clone)]
pub struct PsdDiagnostics {
    pub classification: PsdClassification,
    /// Problem in simultaneous-diagonal simplified form.
    pub reduced: ProblemSpec,
    pub data: SimplifiedFormData,
}

#[derive(Debug, Clone)]
pub struct CanonicalDiagnostics {
    /// Constraint sign was reversed so that `B` has a positive eigenvalue.
    pub negated: bool,
    pub data: CanonicalData,
    pub drcf: DrcfSpec,
    pub outcome: DrcfOutcome,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Solution set in the original coordinates.
    pub solution: SolutionSet,
    pub sense: Sense,
    pub n: usize,
    pub rank: usize,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
    pub chain: TransformChain,
    pub centred: Option<ProblemSpec>,
    pub psd: Option<PsdDiagnostics>,
    pub canonical: Option<CanonicalDiagnostics>,
    /// Report of the reduced problem in `x1` when the objective was singular.
    pub projected: Option<Box<SolveReport>>,
}

impl SolveReport {
    pub fn infimum(&self) -> f64 {
        self.solution.infimum
    }

    pub fn attained(&self) -> bool {
        self.solution.attained
    }

    pub fn representative(&self) -> Option<DVector<f64>> {
        self.solution.representative()
    }

    pub fn sample(&self, count: usize, seed: u64, spread: f64) -> Result<Vec<DVector<f64>>, SolveError> {
        self.solution.sample(count, seed, spread)
    }

    /// The drcf diagnostics of this solve or of its projected solve.
    pub fn canonical_stage(&self) -> Option<&CanonicalDiagnostics> {
        self.canonical
            .as_ref()
            .or_else(|| self.projected.as_ref().and_then(|p| p.canonical_stage()))
    }

    /// Unique multiplier of the drcf stage, if any.
    pub fn lambda(&self) -> Option<f64> {
        self.canonical_stage().and_then(|c| c.outcome.lambda)
    }

    pub fn lagrangian_kind(&self) -> Option<LagrangianKind> {
        self.canonical_stage().map(|c| c.outcome.class.kind)
    }

    pub fn psd_case(&self) -> Option<PsdCase> {
        self.psd.as_ref().map(|p| p.classification.case)
    }

    /// Human-readable classification labels, outermost first.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(p) = &self.psd {
            out.push(format!(
                "psd:{} ({})",
                p.classification.case.label(),
                p.classification.branch.label()
            ));
        }
        if let Some(c) = &self.canonical {
            out.push(format!("drcf:{}", c.outcome.class.kind.label()));
            out.push(format!("branch:{}", c.outcome.branch.label()));
        }
        if let Some(p) = &self.projected {
            out.extend(p.labels());
        }
        if out.is_empty() {
            if let Some(t) = self.trace.iter().rev().find(|t| t.stage == "affine" || t.stage == "inequality") {
                out.push(format!("{}:{}", t.stage, t.decision));
            }
        }
        out
    }

    /// Smallest nonzero margin recorded anywhere in the trace.
    pub fn min_margin(&self) -> Option<(String, f64)> {
        let mut best: Option<(String, f64)> = None;
        let mut visit = |r: &SolveReport| {
            for t in &r.trace {
                for (name, v) in &t.margins {
                    if v.is_finite() && *v > 0.0 && best.as_ref().is_none_or(|b| *v < b.1) {
                        best = Some((format!("{}.{}", t.stage, name), *v));
                    }
                }
            }
        };
        visit(self);
        let mut cur = self.projected.as_deref();
        while let Some(p) = cur {
            visit(p);
            cur = p.projected.as_deref();
        }
        best
    }
}

struct Ctx<'a> {
    cfg: &'a SolverConfig,
    trace: Vec<TraceEntry>,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    /// Records a zero test; warns when it came out close to the threshold.
    fn watch(&mut self, name: &str, margin: f64, tol: f64) {
        if margin > tol && margin <= 1e3 * tol {
            self.warnings
                .push(format!("{name} = {margin:.3e} is within 1e3 of its zero threshold {tol:.1e}"));
        } else if margin > 0.0 && margin <= tol {
            self.warnings
                .push(format!("{name} = {margin:.3e} was treated as zero (threshold {tol:.1e})"));
        }
    }
}

fn check_config(cfg: &SolverConfig) -> Result<(), SolveError> {
    match cfg.invalid_field() {
        Some(field) => Err(SolveError::InvalidConfig { field }),
        None => Ok(()),
    }
}

/// Solves `p` according to its sense.
pub fn solve(p: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    match p.sense {
        Sense::Equality => solve_equality(p, cfg),
        Sense::LessEqual => solve_inequality(p, cfg),
    }
}

fn report(
    solution: SolutionSet,
    p: &ProblemSpec,
    rank: usize,
    ctx: Ctx<'_>,
    chain: TransformChain,
    centred: Option<ProblemSpec>,
) -> SolveReport {
    let mut r = SolveReport {
        solution,
        sense: p.sense,
        n: p.dim(),
        rank,
        trace: ctx.trace,
        warnings: ctx.warnings,
        chain,
        centred,
        psd: None,
        canonical: None,
        projected: None,
    };
    if let Some(x) = r.solution.representative() {
        let q = p.constraint(&x);
        let scale = p.constraint_scale(&x);
        let bad = match p.sense {
            Sense::Equality => q.abs() > ctx.cfg.tol_feas * scale,
            Sense::LessEqual => q > ctx.cfg.tol_feas * scale,
        };
        if bad {
            r.warnings
                .push(format!("representative misses the constraint by {q:.3e} (scale {scale:.3e})"));
        }
    }
    r
}

/// Solves the equality-constrained problem (the sense of `p` is ignored).
pub fn solve_equality(p: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    check_config(cfg)?;
    let mut ctx = Ctx {
        cfg,
        trace: Vec::new(),
        warnings: Vec::new(),
    };
    let v = validate(p, cfg)?;
    ctx.trace.push(
        TraceEntry::new("validate", format!("rank(A) = {} of {}", v.rank, v.n)).margin("rank_gap", v.rank_gap),
    );
    let fa = feasibility_check(&p.quadratic, &p.linear, p.level, cfg)?;
    ctx.trace.push(
        TraceEntry::new("feasibility", if fa.is_feasible() { "feasible" } else { "infeasible" })
            .margin("b_perp", fa.b_perp_margin)
            .margin("k_plus", fa.k_plus_margin),
    );
    if let crate::problem::Feasibility::Infeasible(case) = fa.verdict {
        return Err(SolveError::Infeasible { case });
    }

    let centred = transforms::to_centred_ls(p, cfg)?;
    ctx.trace.push(TraceEntry::new("centred-ls", format!("A -> diag(I_{}, O), t -> 0", centred.rank)));
    let mut chain = TransformChain::new();
    chain.push(centred.map.clone());
    let c = &centred.problem;
    let r = centred.rank;
    let n = p.dim();

    if v.quad_is_zero {
        let set = affine_constraint_solve(c, r, &mut ctx);
        let solution = set.pull_back_chain(&chain);
        return Ok(report(solution, p, r, ctx, chain, Some(c.clone())));
    }

    if r < n {
        let simp = transforms::to_simplified_form(c, r, cfg)?;
        ctx.trace.push(TraceEntry::new(
            "simplified-form",
            format!("s0 = {}, y0 dimension {}", simp.data.s0, simp.data.y_dim()),
        ));
        chain.push(simp.map.clone());
        let diag = transforms::to_simultaneous_diagonal(&simp.problem, &simp.data, cfg)?;
        ctx.trace.push(TraceEntry::new("simultaneous-diagonal", "B11 diagonal"));
        chain.push(diag.map.clone());

        let class = psd::classify_psd(&diag.problem, &diag.data, cfg);
        ctx.watch("k1", class.k1_margin, cfg.tol_class);
        if !diag.data.c0.is_empty() {
            ctx.watch("c0", class.c0_margin, cfg.tol_class);
        }
        if diag.data.c10.ncols() > 0 {
            ctx.watch("C10", class.c10_margin, cfg.tol_class);
        }
        ctx.trace.push(
            TraceEntry::new(
                "psd-classification",
                format!("{} ({})", class.case.label(), class.branch.label()),
            )
            .margin("k1", class.k1_margin)
            .margin("c0", class.c0_margin)
            .margin("C10", class.c10_margin),
        );
        let delegate = |q: &ProblemSpec| solve_equality(q, cfg);
        let out = psd::solve_psd(&diag.data, class, &delegate)?;
        let solution = out.set.pull_back_chain(&chain);
        let mut rep = report(solution, p, r, ctx, chain, Some(c.clone()));
        rep.psd = Some(PsdDiagnostics {
            classification: out.classification,
            reduced: diag.problem,
            data: diag.data,
        });
        if let Some(sub) = out.projected_report {
            rep.warnings.extend(sub.warnings.iter().map(|w| format!("reduced problem: {w}")));
            rep.projected = Some(sub);
        }
        return Ok(rep);
    }

    let (set, diag_info, canon_map) = solve_full(c, &mut ctx)?;
    chain.push(canon_map);
    let solution = set.pull_back_chain(&chain);
    let mut rep = report(solution, p, r, ctx, chain, Some(c.clone()));
    rep.canonical = Some(diag_info);
    Ok(rep)
}

/// Full least-squares pipeline on a centred problem with `A = I`.
/// Returns the set in canonical coordinates and the canonical map.
fn solve_full(
    c: &ProblemSpec,
    ctx: &mut Ctx<'_>,
) -> Result<(SolutionSet, CanonicalDiagnostics, AffineMap), SolveError> {
    let cfg = ctx.cfg;
    let spec = spectral_decompose_named(&c.quadratic, cfg.tol_cluster, "constraint matrix B")?;
    let cut = cfg.tol_rank * spec.scale();
    let negated = spec.values[0] <= cut;
    let work = if negated { c.negated() } else { c.clone() };
    ctx.trace.push(TraceEntry::new(
        "sign-normalization",
        if negated {
            "constraint negated"
        } else {
            "unchanged"
        },
    ));

    let cf = transforms::to_canonical_form(&work, cfg)?;
    let data = cf.data.clone();
    ctx.trace.push(
        TraceEntry::new(
            "canonical-form",
            format!(
                "m0 = {}, q = {}, multiplicities {:?}",
                data.null_dim,
                data.q(),
                data.multiplicities
            ),
        )
        .margin("epsilon", data.epsilon)
        .margin("k_star", data.k_star.abs() / data.k_star_scale),
    );
    let drcf = transforms::dimension_reduce(&data, cfg);
    let len_scale = data.delta.iter().copied().fold(1.0_f64.max(data.epsilon), f64::max);
    for (i, d) in data.delta.iter().enumerate() {
        ctx.watch(&format!("delta_{}", i + 1), d / len_scale, cfg.tol_class);
    }
    if data.null_dim > 0 {
        ctx.watch("epsilon", data.epsilon / len_scale, cfg.tol_class);
    }
    ctx.watch("k_star", data.k_star.abs() / data.k_star_scale, cfg.tol_class);
    ctx.trace.push(TraceEntry::new(
        "dimension-reduction",
        format!(
            "n_bar = {}{}",
            drcf.n_bar(),
            if drcf.dropped_null_block { ", null block dropped" } else { "" }
        ),
    ));

    let outcome = canonical::solve_drcf(&drcf, cfg)?;
    let mut entry = TraceEntry::new(
        "drcf",
        format!("{}; {}", outcome.class.kind.label(), outcome.branch.label()),
    )
    .margin("f_lo", outcome.f_lo)
    .margin("f_hi", outcome.f_hi);
    if let Some(l) = outcome.lambda {
        entry = entry.margin("lambda", l);
    }
    ctx.trace.push(entry);
    let set = canonical::lift_to_canonical(&outcome, &drcf, &data);
    Ok((
        set,
        CanonicalDiagnostics {
            negated,
            data,
            drcf,
            outcome,
        },
        cf.map,
    ))
}

fn coordinate_basis(n: usize, start: usize, len: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, len);
    for j in 0..len {
        e[(start + j, j)] = 1.0;
    }
    e
}

/// Orthonormal basis of the complement of `v` inside coordinates
/// `start..start+len` of `R^n`.
fn complement_basis(n: usize, start: usize, v: &DVector<f64>) -> DMatrix<f64> {
    let len = v.len();
    let q = linalg::orthogonal_completion(&v.normalize());
    let mut e = DMatrix::zeros(n, len - 1);
    e.view_mut((start, 0), (len, len - 1)).copy_from(&q.columns(1, len - 1));
    e
}

/// Centred problem with `B = O`: minimize `|x1|²` over `2b'x = k`.
fn affine_constraint_solve(c: &ProblemSpec, r: usize, ctx: &mut Ctx<'_>) -> SolutionSet {
    let n = c.dim();
    let k = c.level;
    let b1 = c.linear.rows(0, r).into_owned();
    let b0 = c.linear.rows(r, n - r).into_owned();
    let scale = linalg::vec_scale(&c.linear);
    let b_zero = c.linear.amax() / scale <= ctx.cfg.tol_class && c.linear.amax() <= ctx.cfg.tol_class;
    let b0_margin = if b0.is_empty() { 0.0 } else { b0.amax() / scale };
    let b0_zero = b0.is_empty() || b0_margin <= ctx.cfg.tol_class;
    if !b0.is_empty() {
        ctx.watch("b0", b0_margin, ctx.cfg.tol_class);
    }

    if b_zero {
        ctx.trace.push(TraceEntry::new("affine", "constraint vacuous; unconstrained minimum"));
        return SolutionSet::with_blocks(
            DVector::zeros(n),
            vec![SetBlock::AffineFree {
                basis: coordinate_basis(n, r, n - r),
            }],
            0.0,
        );
    }
    if !b0_zero {
        ctx.trace.push(TraceEntry::new("affine", "hyperplane meets x1 = 0").margin("b0", b0_margin));
        let mut base = DVector::zeros(n);
        let x0 = &b0 * (k / (2.0 * b0.norm_squared()));
        base.rows_mut(r, n - r).copy_from(&x0);
        let mut blocks = Vec::new();
        if n - r > 1 {
            blocks.push(SetBlock::AffineFree {
                basis: complement_basis(n, r, &b0),
            });
        }
        return SolutionSet::with_blocks(base, blocks, 0.0);
    }
    ctx.trace.push(TraceEntry::new("affine", "hyperplane parallel to the null space of A").margin("b0", b0_margin));
    let nb = b1.norm_squared();
    let mut base = DVector::zeros(n);
    base.rows_mut(0, r).copy_from(&(&b1 * (k / (2.0 * nb))));
    let mut blocks = Vec::new();
    if n > r {
        blocks.push(SetBlock::AffineFree {
            basis: coordinate_basis(n, r, n - r),
        });
    }
    SolutionSet::with_blocks(base, blocks, k * k / (4.0 * nb))
}

/// Solves `min L(x)` subject to `Q(x) <= 0`.
pub fn solve_inequality(p: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    check_config(cfg)?;
    let p = p.clone().with_sense(Sense::LessEqual);
    let mut ctx = Ctx {
        cfg,
        trace: Vec::new(),
        warnings: Vec::new(),
    };
    let v = validate(&p, cfg)?;
    ctx.trace.push(
        TraceEntry::new("validate", format!("rank(A) = {} of {}", v.rank, v.n)).margin("rank_gap", v.rank_gap),
    );
    let fa = feasibility_check(&p.quadratic, &p.linear, p.level, cfg)?;
    let n = p.dim();
    let centred = transforms::to_centred_ls(&p, cfg)?;
    let r = centred.rank;
    let mut chain = TransformChain::new();
    chain.push(centred.map.clone());
    let c = &centred.problem;

    if let crate::problem::Feasibility::Infeasible(case) = fa.verdict {
        // Q keeps the sign of Q(-x_b) = -k_plus everywhere.
        if fa.k_plus > 0.0 {
            ctx.trace.push(
                TraceEntry::new("inequality", "Q < 0 everywhere; unconstrained minimum").margin("k_plus", fa.k_plus_margin),
            );
            let mut blocks = Vec::new();
            if n > r {
                blocks.push(SetBlock::AffineFree {
                    basis: coordinate_basis(n, r, n - r),
                });
            }
            let set = SolutionSet::with_blocks(DVector::zeros(n), blocks, 0.0);
            let solution = set.pull_back_chain(&chain);
            return Ok(report(solution, &p, r, ctx, chain, Some(c.clone())));
        }
        return Err(SolveError::Infeasible { case });
    }

    if r == n {
        let q0 = -c.level;
        let scale = 1.0_f64.max(c.level.abs());
        if q0 <= cfg.tol_feas * scale {
            ctx.trace.push(TraceEntry::new("inequality", "target satisfies the constraint").margin("q_target", q0 / scale));
            let solution = SolutionSet::point(DVector::zeros(n), 0.0).pull_back_chain(&chain);
            return Ok(report(solution, &p, r, ctx, chain, Some(c.clone())));
        }
        ctx.trace.push(
            TraceEntry::new("inequality", "target outside; effectively equivalent to the equality problem")
                .margin("q_target", q0 / scale),
        );
    } else {
        let b00 = c.quadratic.principal_block(r, n - r);
        let b0 = c.linear.rows(r, n - r).into_owned();
        if let Some(point) = sublevel_point(&b00, &b0, c.level, cfg)? {
            ctx.trace.push(TraceEntry::new("inequality", "x1 = 0 admits feasible x0; loss zero"));
            let fiber = SublevelFiber {
                b00,
                b0,
                k: c.level,
                point,
            };
            let set = SolutionSet::with_blocks(
                DVector::zeros(n),
                vec![SetBlock::Sublevel {
                    fiber,
                    embed: coordinate_basis(n, r, n - r),
                }],
                0.0,
            );
            let solution = set.pull_back_chain(&chain);
            return Ok(report(solution, &p, r, ctx, chain, Some(c.clone())));
        }
        ctx.trace.push(TraceEntry::new(
            "inequality",
            "no feasible x0 at x1 = 0; effectively equivalent to the equality problem",
        ));
    }

    let mut eq = solve_equality(&p, cfg)?;
    let mut trace = ctx.trace;
    trace.append(&mut eq.trace);
    eq.trace = trace;
    eq.warnings.splice(0..0, ctx.warnings);
    eq.sense = Sense::LessEqual;
    Ok(eq)
}

/// A point with `x0'B00x0 + 2b0'x0 - k < 0` (or `<= 0`), if one exists.
fn sublevel_point(
    b00: &SymMatrix,
    b0: &DVector<f64>,
    k: f64,
    cfg: &SolverConfig,
) -> Result<Option<DVector<f64>>, SolveError> {
    let spec = spectral_decompose_named(b00, cfg.tol_cluster, "null-space block B00")?;
    let (x_b, b_perp) = linalg::mp_split_with(&spec, b0, cfg.tol_rank);
    let k_plus = k + b0.dot(&x_b);
    let level = 1.0_f64.max(k.abs());
    if b_perp.amax() > cfg.tol_class * linalg::vec_scale(b0) {
        let tau = (k - level) / (2.0 * b_perp.norm_squared());
        return Ok(Some(&b_perp * tau));
    }
    let k_scale = 1.0_f64.max(k.abs()).max(b0.dot(&x_b).abs());
    if k_plus >= -cfg.tol_class * k_scale {
        return Ok(Some(-x_b));
    }
    let cut = cfg.tol_rank * spec.scale();
    let last = spec.dim() - 1;
    if spec.values[last] < -cut {
        let g = spec.values[last];
        let s = (2.0 * k_plus.abs() / g.abs()).sqrt();
        return Ok(Some(-x_b + spec.basis.column(last) * s));
    }
    Ok(None)
}
