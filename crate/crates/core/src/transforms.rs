//! Affine changes of coordinates and the chain of reductions built from them.
//!
//! A map `g = (T, a)` sends `x -> x_g = T⁻¹(x - a)` and induces
//!
//! ```text
//! t_g = T⁻¹(t - a)   A_g = T'AT   B_g = T'BT   b_g = T'(b + Ba)   k_g = k - a'(2b + Ba)
//! ```
//!
//! so that `L(x) = L_g(x_g)` and `Q(x) = Q_g(x_g)`. Each reduction below
//! returns the transformed problem together with the map that produced it,
//! and solutions are pulled back through the recorded maps at the end.

use nalgebra::{DMatrix, DVector};

use crate::config::SolverConfig;
use crate::error::SolveError;
use crate::linalg::{self, orthogonal_completion, spectral_decompose_named, SymMatrix};
use crate::problem::{ProblemSpec, Sense};

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    shift: DVector<f64>,
    inverse: DMatrix<f64>,
}

fn condition_estimate(t: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let inf_norm = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    inf_norm(t) * inf_norm(inv)
}

impl AffineMap {
    /// General map; fails when `T` is singular or its condition estimate
    /// exceeds `max_condition`.
    pub fn new(linear: DMatrix<f64>, shift: DVector<f64>, max_condition: f64) -> Result<Self, SolveError> {
        let n = linear.nrows();
        if linear.ncols() != n || shift.len() != n {
            return Err(SolveError::DimensionMismatch {
                what: "affine map",
                expected: n,
                found: shift.len(),
            });
        }
        let inverse = linear
            .clone()
            .try_inverse()
            .ok_or(SolveError::SingularTransform { condition: f64::INFINITY })?;
        let condition = condition_estimate(&linear, &inverse);
        if !condition.is_finite() || condition > max_condition {
            return Err(SolveError::SingularTransform { condition });
        }
        Ok(Self {
            linear,
            shift,
            inverse,
        })
    }

    /// Map with a known inverse, skipping the factorization.
    pub(crate) fn with_inverse(linear: DMatrix<f64>, inverse: DMatrix<f64>, shift: DVector<f64>) -> Self {
        Self {
            linear,
            shift,
            inverse,
        }
    }

    /// `T` orthogonal; the inverse is the transpose.
    pub fn orthogonal(linear: DMatrix<f64>, shift: DVector<f64>) -> Self {
        let inverse = linear.transpose();
        Self::with_inverse(linear, inverse, shift)
    }

    pub fn identity(n: usize) -> Self {
        Self::orthogonal(DMatrix::identity(n, n), DVector::zeros(n))
    }

    pub fn translation(a: DVector<f64>) -> Self {
        let n = a.len();
        Self::orthogonal(DMatrix::identity(n, n), a)
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// `T`
    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// `a`
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn inverse_linear(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `x -> T⁻¹(x - a)`, into the transformed coordinates.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inverse * (x - &self.shift)
    }

    /// `x_g -> T x_g + a`, back to the original coordinates.
    pub fn backward(&self, x_g: &DVector<f64>) -> DVector<f64> {
        &self.linear * x_g + &self.shift
    }

    /// The map "apply `self`, then `next`": `T = T1 T2`, `a = a1 + T1 a2`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &self.linear * &next.linear,
            shift: &self.shift + &self.linear * &next.shift,
            inverse: &next.inverse * &self.inverse,
        }
    }
}

/// Maps recorded in reduction order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransformChain {
    maps: Vec<AffineMap>,
}

impl TransformChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, g: AffineMap) {
        self.maps.push(g);
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    /// Original coordinates to fully reduced coordinates.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.maps.iter().fold(x.clone(), |acc, g| g.forward(&acc))
    }

    /// Reduced coordinates back to the original ones.
    pub fn backward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.maps.iter().rev().fold(x.clone(), |acc, g| g.backward(&acc))
    }

    /// Single map equivalent to the whole chain, `None` when empty.
    pub fn composite(&self) -> Option<AffineMap> {
        let mut it = self.maps.iter();
        let first = it.next()?.clone();
        Some(it.fold(first, |acc, g| acc.then(g)))
    }
}

/// The problem induced by `g`.
pub fn apply_affine(p: &ProblemSpec, g: &AffineMap) -> Result<ProblemSpec, SolveError> {
    let n = p.dim();
    if g.dim() != n {
        return Err(SolveError::DimensionMismatch {
            what: "affine map",
            expected: n,
            found: g.dim(),
        });
    }
    let t = g.linear();
    let a = g.shift();
    let ba = p.quadratic.matrix() * a;
    Ok(ProblemSpec {
        objective: p.objective.congruence(t),
        target: g.forward(&p.target),
        quadratic: p.quadratic.congruence(t),
        linear: t.transpose() * (&p.linear + &ba),
        level: p.level - a.dot(&(&p.linear * 2.0 + &ba)),
        sense: p.sense,
    })
}

fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let m = b.nrows();
        out.view_mut((at, at), (m, m)).copy_from(b);
        at += m;
    }
    out
}

/// Output of [`to_centred_ls`].
#[derive(Debug, Clone)]
pub struct CentredForm {
    pub problem: ProblemSpec,
    pub map: AffineMap,
    /// Rank `r` of `A`; the loss is now `|x_1|^2` on the first `r` coordinates.
    pub rank: usize,
}

/// Translates the target to the origin and whitens `A` to `diag(I_r, O)`.
///
/// `T_A = U_A diag(D_A⁻¹, I)` with `A = U_A diag(D_A², O) U_A'`, eigenvalues
/// in decreasing order.
pub fn to_centred_ls(p: &ProblemSpec, cfg: &SolverConfig) -> Result<CentredForm, SolveError> {
    let n = p.dim();
    let spec = spectral_decompose_named(&p.objective, cfg.tol_cluster, "objective matrix A")?;
    let rank = linalg::numeric_rank(&spec, cfg.tol_rank);
    if rank == 0 {
        return Err(SolveError::ZeroObjective);
    }
    let mut scale = DVector::from_element(n, 1.0);
    let mut unscale = DVector::from_element(n, 1.0);
    for i in 0..rank {
        let d = spec.values[i].sqrt();
        scale[i] = 1.0 / d;
        unscale[i] = d;
    }
    let u = &spec.basis;
    let linear = u * DMatrix::from_diagonal(&scale);
    let inverse = DMatrix::from_diagonal(&unscale) * u.transpose();
    let map = AffineMap::with_inverse(linear, inverse, p.target.clone());
    let condition = condition_estimate(map.linear(), map.inverse_linear());
    if condition > cfg.max_condition {
        return Err(SolveError::SingularTransform { condition });
    }

    let mut problem = apply_affine(p, &map)?;
    let mut a = vec![0.0; n];
    a[..rank].iter_mut().for_each(|v| *v = 1.0);
    problem.objective = SymMatrix::from_diagonal(&a);
    problem.target = DVector::zeros(n);
    Ok(CentredForm { problem, map, rank })
}

/// Block data of a centred problem in simplified form, where
///
/// ```text
///     | B11   C10  0  |
/// B = | C10'  O    0  |      x = (x1, y0, z0),  b = (b1, c0, d0)
///     | 0     0    Γ0 |
/// ```
///
/// with `x1` of length `r`, `z0` of length `s0` and `Γ0` diagonal nonsingular.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedFormData {
    pub r: usize,
    pub s0: usize,
    pub b11: SymMatrix,
    /// `r x (n - r - s0)`
    pub c10: DMatrix<f64>,
    pub gamma0: Vec<f64>,
    pub b1: DVector<f64>,
    pub c0: DVector<f64>,
    pub d0: DVector<f64>,
    /// `k + d0' Γ0⁻¹ d0`
    pub k1: f64,
}

impl SimplifiedFormData {
    /// Reads the blocks off a problem already in simplified form.
    pub fn from_problem(p: &ProblemSpec, r: usize, s0: usize) -> Self {
        let n = p.dim();
        let ny = n - r - s0;
        let b = p.quadratic.matrix();
        let gamma0: Vec<f64> = (0..s0).map(|i| b[(r + ny + i, r + ny + i)]).collect();
        let d0 = p.linear.rows(r + ny, s0).into_owned();
        let k1 = p.level + d0.iter().zip(&gamma0).map(|(d, g)| d * d / g).sum::<f64>();
        Self {
            r,
            s0,
            b11: p.quadratic.principal_block(0, r),
            c10: b.view((0, r), (r, ny)).into_owned(),
            gamma0,
            b1: p.linear.rows(0, r).into_owned(),
            c0: p.linear.rows(r, ny).into_owned(),
            d0,
            k1,
        }
    }

    pub fn n(&self) -> usize {
        self.r + self.c0.len() + self.s0
    }

    /// Length of `y0`.
    pub fn y_dim(&self) -> usize {
        self.c0.len()
    }

    /// Rebuilds `B` from the blocks.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (r, ny, s0) = (self.r, self.y_dim(), self.s0);
        let n = r + ny + s0;
        let mut b = DMatrix::zeros(n, n);
        b.view_mut((0, 0), (r, r)).copy_from(self.b11.matrix());
        b.view_mut((0, r), (r, ny)).copy_from(&self.c10);
        b.view_mut((r, 0), (ny, r)).copy_from(&self.c10.transpose());
        for (i, g) in self.gamma0.iter().enumerate() {
            b[(r + ny + i, r + ny + i)] = *g;
        }
        b
    }

    /// `-Γ0⁻¹ d0`, the centre of the `z0` quadric.
    pub fn z_center(&self) -> DVector<f64> {
        DVector::from_fn(self.s0, |i, _| -self.d0[i] / self.gamma0[i])
    }
}

/// Orthogonal eigenbasis with numerically-zero eigenvalues first, then the
/// nonzero ones in decreasing order. Returns `(basis, nonzero values)`.
fn null_first_basis(s: &SymMatrix, cfg: &SolverConfig, name: &str) -> Result<(DMatrix<f64>, Vec<f64>), SolveError> {
    let m = s.dim();
    let spec = spectral_decompose_named(s, cfg.tol_cluster, name)?;
    let cut = cfg.tol_rank * spec.scale();
    let zero: Vec<usize> = (0..m).filter(|&i| spec.values[i].abs() <= cut).collect();
    let nonzero: Vec<usize> = (0..m).filter(|&i| spec.values[i].abs() > cut).collect();
    let mut basis = DMatrix::zeros(m, m);
    for (col, &src) in zero.iter().chain(nonzero.iter()).enumerate() {
        basis.set_column(col, &spec.basis.column(src));
    }
    Ok((basis, nonzero.iter().map(|&i| spec.values[i]).collect()))
}

/// Output of the simplified-form reductions.
#[derive(Debug, Clone)]
pub struct SimplifiedForm {
    pub problem: ProblemSpec,
    pub map: AffineMap,
    pub data: SimplifiedFormData,
}

/// Brings a centred problem with `r < n` into simplified form.
///
/// Diagonalizes `B00 = U0 diag(O, Γ0) U0'` and then shears `z0` by
/// `-Γ0⁻¹ D10' x1` to clear the coupling between `x1` and `z0`. The map is
/// linear and keeps `A = diag(I_r, O)`.
pub fn to_simplified_form(p: &ProblemSpec, r: usize, cfg: &SolverConfig) -> Result<SimplifiedForm, SolveError> {
    let n = p.dim();
    let m = n - r;
    let b00 = p.quadratic.principal_block(r, m);
    let (u0, gamma0) = null_first_basis(&b00, cfg, "null-space block B00")?;
    let s0 = gamma0.len();
    let ny = m - s0;

    let mut rot = DMatrix::identity(n, n);
    rot.view_mut((r, r), (m, m)).copy_from(&u0);
    let rotated = p.quadratic.congruence(&rot);
    let d10 = rotated.matrix().view((0, r + ny), (r, s0)).into_owned();

    let mut shear = DMatrix::identity(n, n);
    let mut shear_inv = DMatrix::identity(n, n);
    for i in 0..s0 {
        for j in 0..r {
            let v = -d10[(j, i)] / gamma0[i];
            shear[(r + ny + i, j)] = v;
            shear_inv[(r + ny + i, j)] = -v;
        }
    }
    let linear = &rot * &shear;
    let inverse = &shear_inv * rot.transpose();
    let map = AffineMap::with_inverse(linear, inverse, DVector::zeros(n));
    let condition = condition_estimate(map.linear(), map.inverse_linear());
    if condition > cfg.max_condition {
        return Err(SolveError::SingularTransform { condition });
    }

    let mut problem = apply_affine(p, &map)?;
    let mut data = SimplifiedFormData::from_problem(&problem, r, s0);
    data.gamma0 = gamma0;
    data.k1 = problem.level + data.d0.iter().zip(&data.gamma0).map(|(d, g)| d * d / g).sum::<f64>();
    problem.quadratic = SymMatrix::symmetrized(data.assemble());
    problem.objective = p.objective.clone();
    problem.target = DVector::zeros(n);
    Ok(SimplifiedForm { problem, map, data })
}

/// Diagonalizes `B11 = U1 diag(O, Γ1) U1'` inside a simplified form, so that
/// both `A` and the `x1` block of `B` are diagonal. `C10` becomes `U1' C10`.
pub fn to_simultaneous_diagonal(
    p: &ProblemSpec,
    data: &SimplifiedFormData,
    cfg: &SolverConfig,
) -> Result<SimplifiedForm, SolveError> {
    let n = p.dim();
    let r = data.r;
    let (u1, gamma1) = null_first_basis(&data.b11, cfg, "range block B11")?;
    let mut linear = DMatrix::identity(n, n);
    linear.view_mut((0, 0), (r, r)).copy_from(&u1);
    let map = AffineMap::orthogonal(linear, DVector::zeros(n));

    let mut problem = apply_affine(p, &map)?;
    let mut out = SimplifiedFormData::from_problem(&problem, r, data.s0);
    let mut diag = vec![0.0; r - gamma1.len()];
    diag.extend_from_slice(&gamma1);
    out.b11 = SymMatrix::from_diagonal(&diag);
    out.gamma0 = data.gamma0.clone();
    out.k1 = data.k1;
    problem.quadratic = SymMatrix::symmetrized(out.assemble());
    problem.objective = p.objective.clone();
    problem.target = DVector::zeros(n);
    Ok(SimplifiedForm { problem, map, data: out })
}

/// Spectral data of the constraint of a centred full least-squares problem.
///
/// Coordinates are ordered as the null space of `B` (dimension `m0`)
/// followed by the eigenspaces of `γ1 > ... > γq`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalData {
    /// Rank `s` of `B`.
    pub rank: usize,
    pub null_dim: usize,
    pub gammas: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// `l0`: length of the projection of `b` onto the null space of `B`.
    pub null_length: f64,
    /// `l_i`: lengths of the projections of `b` onto each eigenspace.
    pub lengths: Vec<f64>,
    /// `δ_i = l_i / |γ_i|`
    pub delta: Vec<f64>,
    /// `ε = l0`
    pub epsilon: f64,
    /// `k* = k + Σ l_i² / γ_i`
    pub k_star: f64,
    /// Magnitude of the terms summed into `k*`, for its zero test.
    pub k_star_scale: f64,
}

impl CanonicalData {
    pub fn q(&self) -> usize {
        self.gammas.len()
    }

    pub fn n(&self) -> usize {
        self.null_dim + self.multiplicities.iter().sum::<usize>()
    }

    /// First coordinate of eigenspace `i` (0-based over the `q` clusters).
    pub fn block_start(&self, i: usize) -> usize {
        self.null_dim + self.multiplicities[..i].iter().sum::<usize>()
    }

    /// The canonical problem itself: `A = I`, `B = diag(O, γ_i I)`, target
    /// `δ_i u` on each eigenspace, linear term `ε u` on the null space.
    pub fn problem(&self) -> ProblemSpec {
        let n = self.n();
        let mut diag = vec![0.0; n];
        let mut target = DVector::zeros(n);
        for i in 0..self.q() {
            let start = self.block_start(i);
            for j in 0..self.multiplicities[i] {
                diag[start + j] = self.gammas[i];
            }
            target[start] = self.delta[i];
        }
        let mut linear = DVector::zeros(n);
        if self.null_dim > 0 {
            linear[0] = self.epsilon;
        }
        ProblemSpec {
            objective: SymMatrix::identity(n),
            target,
            quadratic: SymMatrix::from_diagonal(&diag),
            linear,
            level: self.k_star,
            sense: Sense::Equality,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub problem: ProblemSpec,
    pub map: AffineMap,
    pub data: CanonicalData,
}

/// Euclidean reduction of a centred full least-squares problem (`A = I`,
/// `t = 0`) to canonical form.
///
/// The eigenbasis of `B` is rotated inside each eigenspace so that the
/// projection of `b` lies along the first axis of that eigenspace, then the
/// coordinates are translated by `γ_i⁻¹ d_i` on each eigenspace. The caller
/// must make sure `B` has a positive eigenvalue.
pub fn to_canonical_form(p: &ProblemSpec, cfg: &SolverConfig) -> Result<CanonicalForm, SolveError> {
    let n = p.dim();
    let spec = spectral_decompose_named(&p.quadratic, cfg.tol_cluster, "constraint matrix B")?;
    let cut = cfg.tol_rank * spec.scale();

    let null_cols: Vec<usize> = spec
        .clusters
        .iter()
        .filter(|c| c.value.abs() <= cut)
        .flat_map(|c| c.columns())
        .collect();
    let clusters: Vec<_> = spec.clusters.iter().filter(|c| c.value.abs() > cut).collect();
    if clusters.first().is_none_or(|c| c.value <= 0.0) {
        return Err(SolveError::NoPositiveEigenvalue);
    }

    // T_B: null space first, then eigenspaces in decreasing order.
    let mut t_b = DMatrix::zeros(n, n);
    let mut col = 0;
    for &src in &null_cols {
        t_b.set_column(col, &spec.basis.column(src));
        col += 1;
    }
    for c in &clusters {
        for src in c.columns() {
            t_b.set_column(col, &spec.basis.column(src));
            col += 1;
        }
    }
    debug_assert_eq!(col, n);

    let proj = t_b.transpose() * &p.linear;
    let null_dim = null_cols.len();

    // Rotation within each block so the first axis points along b's component.
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(clusters.len() + 1);
    let mut shift_reduced = DVector::zeros(n);
    let unit_block = |v: DVector<f64>, sign: f64| -> DMatrix<f64> {
        let norm = v.norm();
        if norm > 0.0 {
            orthogonal_completion(&(v * (sign / norm)))
        } else {
            DMatrix::identity(norm_len(&v), norm_len(&v))
        }
    };
    fn norm_len(v: &DVector<f64>) -> usize {
        v.len()
    }

    let c = proj.rows(0, null_dim).into_owned();
    let epsilon = c.norm();
    blocks.push(unit_block(c, 1.0));

    let mut gammas = Vec::with_capacity(clusters.len());
    let mut mults = Vec::with_capacity(clusters.len());
    let mut lengths = Vec::with_capacity(clusters.len());
    let mut at = null_dim;
    for cl in &clusters {
        let m = cl.multiplicity;
        let d = proj.rows(at, m).into_owned();
        let gamma = cl.value;
        lengths.push(d.norm());
        shift_reduced.rows_mut(at, m).copy_from(&(&d / gamma));
        blocks.push(unit_block(d, gamma.signum()));
        gammas.push(gamma);
        mults.push(m);
        at += m;
    }
    let block_refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let u_b = block_diag(&block_refs);

    let linear = &t_b * &u_b;
    let shift = -(&t_b * &shift_reduced);
    let map = AffineMap::orthogonal(linear, shift);

    let delta: Vec<f64> = lengths.iter().zip(&gammas).map(|(l, g)| l / g.abs()).collect();
    let correction: f64 = lengths.iter().zip(&gammas).map(|(l, g)| l * l / g).sum();
    let k_star_scale = 1.0_f64
        .max(p.level.abs())
        .max(lengths.iter().zip(&gammas).map(|(l, g)| l * l / g.abs()).sum::<f64>());
    let data = CanonicalData {
        rank: n - null_dim,
        null_dim,
        gammas,
        multiplicities: mults,
        null_length: epsilon,
        lengths,
        delta,
        epsilon,
        k_star: p.level + correction,
        k_star_scale,
    };
    Ok(CanonicalForm {
        problem: data.problem(),
        map,
        data,
    })
}

/// One variable per distinct nonzero eigenvalue, plus `y` for the null space
/// when the linear term survives there.
///
/// Values have already been through the tolerant zero tests: any `δ_i`, `ε`
/// or `k*` judged zero is stored as exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrcfSpec {
    pub gammas: Vec<f64>,
    pub delta: Vec<f64>,
    /// Zero unless `has_null_var`.
    pub epsilon: f64,
    pub k_star: f64,
    /// `y` variable present (`m0 > 0` and `ε > 0`).
    pub has_null_var: bool,
    /// `m0 > 0` but `ε = 0`, so the null block was dropped with `y = 0`.
    pub dropped_null_block: bool,
    /// The values before zero snapping.
    pub raw_delta: Vec<f64>,
    pub raw_epsilon: f64,
    pub raw_k_star: f64,
}

impl DrcfSpec {
    pub fn q(&self) -> usize {
        self.gammas.len()
    }

    /// Number of reduced variables, `q` or `q + 1`.
    pub fn n_bar(&self) -> usize {
        self.q() + usize::from(self.has_null_var)
    }

    /// Always true: irregular forms are reduced before construction.
    pub fn is_regular(&self) -> bool {
        !self.has_null_var || self.epsilon > 0.0
    }

    /// Diagonal of `Δ` (leading zero for `y`).
    pub fn delta_diag(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.n_bar());
        if self.has_null_var {
            d.push(0.0);
        }
        d.extend_from_slice(&self.gammas);
        d
    }

    /// Target `w0`.
    pub fn w0(&self) -> DVector<f64> {
        let mut w = Vec::with_capacity(self.n_bar());
        if self.has_null_var {
            w.push(0.0);
        }
        w.extend_from_slice(&self.delta);
        DVector::from_vec(w)
    }

    /// Linear term `d = ε u`.
    pub fn d(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n_bar());
        if self.has_null_var {
            d[0] = self.epsilon;
        }
        d
    }

    /// `Q*(w) = w'Δw + 2d'w - k*`
    pub fn constraint(&self, w: &DVector<f64>) -> f64 {
        let diag = self.delta_diag();
        let quad: f64 = w.iter().zip(&diag).map(|(x, g)| g * x * x).sum();
        quad + 2.0 * self.d().dot(w) - self.k_star
    }

    /// `|w - w0|^2`
    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        (w - self.w0()).norm_squared()
    }

    /// Offset of the `z` variables inside `w`.
    pub fn z_offset(&self) -> usize {
        usize::from(self.has_null_var)
    }

    pub fn gamma_min(&self) -> f64 {
        *self.gammas.last().expect("q >= 1")
    }

    /// The same problem as a [`ProblemSpec`].
    pub fn problem(&self) -> ProblemSpec {
        let n = self.n_bar();
        ProblemSpec {
            objective: SymMatrix::identity(n),
            target: self.w0(),
            quadratic: SymMatrix::from_diagonal(&self.delta_diag()),
            linear: self.d(),
            level: self.k_star,
            sense: Sense::Equality,
        }
    }
}

/// Builds the regular dimension-reduced form of a canonical problem.
///
/// `δ_i`, `ε` and `k*` are tested against `tol_class` (relative to
/// `max(1, max δ, ε)` and the scale of the terms making up `k*`) and snapped
/// to zero when they pass; the raw values are kept alongside.
pub fn dimension_reduce(data: &CanonicalData, cfg: &SolverConfig) -> DrcfSpec {
    let len_scale = data
        .delta
        .iter()
        .copied()
        .fold(1.0_f64.max(data.epsilon), f64::max);
    let cut = cfg.tol_class * len_scale;
    let delta: Vec<f64> = data.delta.iter().map(|&d| if d <= cut { 0.0 } else { d }).collect();
    let eps_nonzero = data.null_dim > 0 && data.epsilon > cut;
    let k_star = if data.k_star.abs() <= cfg.tol_class * data.k_star_scale {
        0.0
    } else {
        data.k_star
    };
    DrcfSpec {
        gammas: data.gammas.clone(),
        delta,
        epsilon: if eps_nonzero { data.epsilon } else { 0.0 },
        k_star,
        has_null_var: eps_nonzero,
        dropped_null_block: data.null_dim > 0 && !eps_nonzero,
        raw_delta: data.delta.clone(),
        raw_epsilon: data.epsilon,
        raw_k_star: data.k_star,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ProblemSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn eye(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    fn worked(kappa: f64) -> ProblemSpec {
        ProblemSpec::from_rows(
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, -1.0],
                vec![0.0, -1.0, 1.0 + kappa],
            ],
            &[1.0, 1.0, 1.0],
            &eye(3),
            &[0.0; 3],
            1.0,
        )
        .unwrap()
    }

    fn random_problem(n: usize, rng: &mut ChaCha8Rng) -> ProblemSpec {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let a = &m * m.transpose() + DMatrix::identity(n, n) * 0.5;
        let bm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        ProblemSpec::new(
            SymMatrix::symmetrized(a),
            DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            SymMatrix::symmetrized(bm),
            DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            rng.random_range(-2.0..2.0),
            Sense::Equality,
        )
        .unwrap()
    }

    fn random_map(n: usize, rng: &mut ChaCha8Rng) -> AffineMap {
        loop {
            let t = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            let a = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            if let Ok(g) = AffineMap::new(t, a, 1e4) {
                return g;
            }
        }
    }

    #[test]
    fn identity_and_translation() {
        let p = worked(1.5);
        let q = apply_affine(&p, &AffineMap::identity(3)).unwrap();
        assert_eq!(p, q);
        let q = apply_affine(&p, &AffineMap::translation(p.target.clone())).unwrap();
        assert_eq!(q.target, DVector::zeros(3));
        // k_g = k - t'(2b + Bt) with b = 0, B = I
        assert!((q.level - (1.0 - 3.0)).abs() < 1e-15);
        assert_eq!(q.quadratic, p.quadratic);
    }

    #[test]
    fn affine_invariance_of_loss_and_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let p = random_problem(n, &mut rng);
            let g = random_map(n, &mut rng);
            let pg = apply_affine(&p, &g).unwrap();
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let xg = g.forward(&x);
            let scale = p.scale() * (1.0 + x.norm_squared());
            assert!((p.loss(&x) - pg.loss(&xg)).abs() <= 1e-9 * scale);
            assert!((p.constraint(&x) - pg.constraint(&xg)).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn chain_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let mut chain = TransformChain::new();
            for _ in 0..3 {
                chain.push(random_map(n, &mut rng));
            }
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let back = chain.backward(&chain.forward(&x));
            assert!((back - &x).amax() <= 1e-10 * linalg::vec_scale(&x) * 1e2);
            let comp = chain.composite().unwrap();
            assert!((comp.forward(&x) - chain.forward(&x)).amax() < 1e-9 * linalg::vec_scale(&x));
        }
    }

    #[test]
    fn negation_commutes_with_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..5);
            let p = random_problem(n, &mut rng);
            let g = random_map(n, &mut rng);
            let lhs = apply_affine(&p.negated(), &g).unwrap();
            let rhs = apply_affine(&p, &g).unwrap().negated();
            let s = p.scale() * 1e2;
            assert!(linalg::max_abs(&(lhs.quadratic.matrix() - rhs.quadratic.matrix())) <= 1e-12 * s);
            assert!((&lhs.linear - &rhs.linear).amax() <= 1e-12 * s);
            assert!((lhs.level - rhs.level).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn signature_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(2..5);
            let p = random_problem(n, &mut rng);
            let g = random_map(n, &mut rng);
            let pg = apply_affine(&p, &g).unwrap();
            let sig = |s: &SymMatrix| linalg::spectral_decompose(s, 1e-9).unwrap().signature(1e-9);
            assert_eq!(sig(&p.quadratic), sig(&pg.quadratic));
            assert_eq!(sig(&p.objective), sig(&pg.objective));
        }
    }

    #[test]
    fn centred_form_of_worked_examples() {
        let c = to_centred_ls(&worked(0.0), &cfg()).unwrap();
        assert_eq!(c.rank, 2);
        assert_eq!(c.problem.objective, SymMatrix::from_diagonal(&[1.0, 1.0, 0.0]));
        assert_eq!(c.problem.target, DVector::zeros(3));
        let check = c.map.linear().transpose() * worked(0.0).objective.matrix() * c.map.linear();
        assert!(linalg::max_abs(&(check - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0])))) < 1e-14);

        let c = to_centred_ls(&worked(1.5), &cfg()).unwrap();
        assert_eq!(c.rank, 3);
        let check = c.map.linear().transpose() * worked(1.5).objective.matrix() * c.map.linear();
        assert!(linalg::max_abs(&(check - DMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn centring_identity_objective_is_a_translation() {
        let p = ProblemSpec::from_rows(&eye(3), &[1.0, 1.0, 1.0], &[vec![2.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, -1.0]], &[0.5, 0.0, 1.0], 3.0)
            .unwrap();
        let c = to_centred_ls(&p, &cfg()).unwrap();
        assert!(linalg::max_abs(&(c.map.linear() - DMatrix::identity(3, 3))) < 1e-15);
        let bt = p.quadratic.matrix() * &p.target;
        let expect = p.level - p.target.dot(&(&p.linear * 2.0 + bt));
        assert!((c.problem.level - expect).abs() < 1e-14);
        assert!(linalg::max_abs(&(c.problem.quadratic.matrix() - p.quadratic.matrix())) < 1e-14);
    }

    #[test]
    fn worked_singular_composite_reduction() {
        let p = worked(0.0);
        let c = to_centred_ls(&p, &cfg()).unwrap();
        let s = to_simplified_form(&c.problem, c.rank, &cfg()).unwrap();
        let d = to_simultaneous_diagonal(&s.problem, &s.data, &cfg()).unwrap();
        let b = d.problem.quadratic.matrix();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 1.0]));
        assert!(linalg::max_abs(&(b - expect)) < 1e-14);
        let bg = &d.problem.linear;
        // Entry signs follow the eigenvector orientation; magnitudes are fixed.
        assert!((bg[0].abs() - 1.0).abs() < 1e-14);
        assert!(bg[1].abs() < 1e-14);
        assert!((bg[2].abs() - 2f64.sqrt()).abs() < 1e-14);
        assert!((d.problem.level + 2.0).abs() < 1e-14);
        assert_eq!(d.data.s0, 1);
        assert!(d.data.k1.abs() < 1e-14);
    }

    #[test]
    fn simplified_form_pattern_and_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..60 {
            let n = rng.random_range(2..6);
            let r = rng.random_range(1..n);
            // centred problem: A = diag(I_r, O), t = 0, random B with a B00 of random rank
            let mut bm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            bm = (&bm + bm.transpose()) * 0.5;
            let m = n - r;
            let rank00 = rng.random_range(0..=m);
            let mut u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            u.normalize_mut();
            let q = orthogonal_completion(&u);
            let d = DVector::from_fn(m, |i, _| if i < rank00 { [1.5, -0.7, 2.0][i % 3] } else { 0.0 });
            bm.view_mut((r, r), (m, m)).copy_from(&(&q * DMatrix::from_diagonal(&d) * q.transpose()));
            let mut a = vec![0.0; n];
            a[..r].iter_mut().for_each(|v| *v = 1.0);
            let p = ProblemSpec::new(
                SymMatrix::from_diagonal(&a),
                DVector::zeros(n),
                SymMatrix::symmetrized(bm),
                DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
                rng.random_range(-2.0..2.0),
                Sense::Equality,
            )
            .unwrap();
            let s = to_simplified_form(&p, r, &cfg()).unwrap();
            assert_eq!(s.data.s0, rank00, "trial {trial}");
            // map lies in the group preserving centred form: T11 orthogonal, T10 = O
            let t = s.map.linear();
            assert!(linalg::max_abs(&t.view((0, r), (r, m)).into_owned()) == 0.0);
            let t11 = t.view((0, 0), (r, r)).into_owned();
            assert!(linalg::max_abs(&(t11.transpose() * &t11 - DMatrix::identity(r, r))) < 1e-14);
            // reassembled B matches the transformed B
            let direct = apply_affine(&p, &s.map).unwrap();
            assert!(linalg::max_abs(&(direct.quadratic.matrix() - s.problem.quadratic.matrix())) < 1e-10);
            assert!(linalg::max_abs(&(direct.objective.matrix() - s.problem.objective.matrix())) < 1e-12);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let xg = s.map.forward(&x);
            assert!((p.constraint(&x) - s.problem.constraint(&xg)).abs() < 1e-9);
            assert!((p.loss(&x) - s.problem.loss(&xg)).abs() < 1e-9);

            let dd = to_simultaneous_diagonal(&s.problem, &s.data, &cfg()).unwrap();
            let b11 = dd.data.b11.matrix();
            for i in 0..r {
                for j in 0..r {
                    if i != j {
                        assert_eq!(b11[(i, j)], 0.0);
                    }
                }
            }
            let xg2 = dd.map.forward(&xg);
            assert!((p.constraint(&x) - dd.problem.constraint(&xg2)).abs() < 1e-9);
            assert!((dd.data.k1 - s.data.k1).abs() < 1e-12);
        }
    }

    #[test]
    fn simplified_form_with_nonsingular_b00_has_no_c10() {
        let p = ProblemSpec::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
            &[0.0; 3],
            &[vec![1.0, 0.5, 0.0], vec![0.5, 2.0, 0.0], vec![0.0, 0.0, -3.0]],
            &[0.0, 1.0, 1.0],
            1.0,
        )
        .unwrap();
        let s = to_simplified_form(&p, 1, &cfg()).unwrap();
        assert_eq!(s.data.s0, 2);
        assert_eq!(s.data.c10.ncols(), 0);
        assert_eq!(s.data.gamma0, vec![2.0, -3.0]);
    }

    #[test]
    fn simplified_form_with_zero_b00() {
        let p = ProblemSpec::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 0.0]],
            &[0.0; 2],
            &[vec![0.0, 0.5], vec![0.5, 0.0]],
            &[0.0, 0.0],
            1.0,
        )
        .unwrap();
        let s = to_simplified_form(&p, 1, &cfg()).unwrap();
        assert_eq!(s.data.s0, 0);
        assert!(s.data.gamma0.is_empty());
        assert_eq!(s.data.c10[(0, 0)], 0.5);
    }

    #[test]
    fn simultaneous_diagonal_of_swap_matrix() {
        // B11 = [[0,1],[1,0]] with a coupling column C10.
        let p = ProblemSpec::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]],
            &[0.0; 3],
            &[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 2.0], vec![1.0, 2.0, 0.0]],
            &[0.0; 3],
            1.0,
        )
        .unwrap();
        let data = SimplifiedFormData::from_problem(&p, 2, 0);
        let d = to_simultaneous_diagonal(&p, &data, &cfg()).unwrap();
        let g = d.data.b11.matrix();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((g[(1, 1)] + 1.0).abs() < 1e-15);
        // E10/F10 = U1' C10 where U1 columns are (1,1)/√2 and (1,-1)/√2 up to sign.
        let c = &d.data.c10;
        assert!((c[(0, 0)].abs() - 3.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((c[(1, 0)].abs() - 1.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn psd_pair_diagonalizes_without_coupling() {
        // A ⪰ O and B ⪰ O: after reduction the coupling block vanishes.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 4;
            let r = 2;
            let mb = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let b = &mb * mb.transpose();
            let mut a = vec![0.0; n];
            a[..r].iter_mut().for_each(|v| *v = 1.0);
            let p = ProblemSpec::new(
                SymMatrix::from_diagonal(&a),
                DVector::zeros(n),
                SymMatrix::symmetrized(b),
                DVector::zeros(n),
                1.0,
                Sense::Equality,
            )
            .unwrap();
            let s = to_simplified_form(&p, r, &cfg()).unwrap();
            let d = to_simultaneous_diagonal(&s.problem, &s.data, &cfg()).unwrap();
            assert!(linalg::max_abs(&d.data.c10) < 1e-9);
        }
    }

    #[test]
    fn canonical_form_of_worked_definite() {
        let c = to_centred_ls(&worked(1.5), &cfg()).unwrap();
        let cf = to_canonical_form(&c.problem, &cfg()).unwrap();
        let d = &cf.data;
        assert_eq!(d.null_dim, 0);
        let expect_g = [2.0, 1.0, 1.0 / 3.0];
        let expect_d = [3.0 / 10f64.sqrt(), 1.0, (3.0f64 / 5.0).sqrt()];
        for i in 0..3 {
            assert!((d.gammas[i] - expect_g[i]).abs() < 1e-9);
            assert!((d.delta[i] - expect_d[i]).abs() < 1e-9);
            assert_eq!(d.multiplicities[i], 1);
        }
        assert!((d.k_star - 1.0).abs() < 1e-9);
        // the map really induces the canonical problem
        let direct = apply_affine(&c.problem, &cf.map).unwrap();
        assert!(linalg::max_abs(&(direct.quadratic.matrix() - cf.problem.quadratic.matrix())) < 1e-12);
        assert!((&direct.target - &cf.problem.target).amax() < 1e-12);
        assert!((&direct.linear - &cf.problem.linear).amax() < 1e-12);
        assert!((direct.level - cf.problem.level).abs() < 1e-12);
    }

    #[test]
    fn canonical_form_sphere_and_hyperbola() {
        let p = ProblemSpec::from_rows(&eye(4), &[0.0; 4], &eye(4), &[0.0; 4], 1.0).unwrap();
        let cf = to_canonical_form(&p, &cfg()).unwrap();
        assert_eq!(cf.data.gammas, vec![1.0]);
        assert_eq!(cf.data.multiplicities, vec![4]);
        assert_eq!(cf.data.delta, vec![0.0]);
        assert_eq!(cf.data.k_star, 1.0);

        let p = ProblemSpec::from_rows(&eye(2), &[0.0; 2], &[vec![1.0, 0.0], vec![0.0, -1.0]], &[0.0; 2], 0.3).unwrap();
        let cf = to_canonical_form(&p, &cfg()).unwrap();
        assert_eq!(cf.data.gammas, vec![1.0, -1.0]);
        assert_eq!(cf.data.delta, vec![0.0, 0.0]);
        assert_eq!(cf.data.k_star, 0.3);

        let neg = ProblemSpec::from_rows(&eye(2), &[0.0; 2], &[vec![-1.0, 0.0], vec![0.0, -2.0]], &[0.0; 2], -1.0).unwrap();
        assert!(matches!(to_canonical_form(&neg, &cfg()), Err(SolveError::NoPositiveEigenvalue)));
    }

    #[test]
    fn canonical_form_random_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..60 {
            let n = rng.random_range(1..6);
            // centred full-LS problem with a singular B sometimes
            let rank = rng.random_range(1..=n);
            let mut u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            u.normalize_mut();
            let q = orthogonal_completion(&u);
            let vals = [2.0, 2.0, -1.0, 0.5, 3.0];
            let d = DVector::from_fn(n, |i, _| if i < rank { vals[i] } else { 0.0 });
            let p = ProblemSpec::new(
                SymMatrix::identity(n),
                DVector::zeros(n),
                SymMatrix::symmetrized(&q * DMatrix::from_diagonal(&d) * q.transpose()),
                DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
                rng.random_range(-2.0..2.0),
                Sense::Equality,
            )
            .unwrap();
            let cf = to_canonical_form(&p, &cfg()).unwrap();
            assert_eq!(cf.data.null_dim, n - rank);
            let sum: usize = cf.data.multiplicities.iter().sum();
            assert_eq!(sum + cf.data.null_dim, n);
            // strict structure: zeros exactly where the form demands
            let pc = &cf.problem;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        assert_eq!(pc.quadratic.get(i, j), 0.0);
                    }
                }
            }
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let xg = cf.map.forward(&x);
            assert!((p.constraint(&x) - pc.constraint(&xg)).abs() < 1e-9);
            assert!((p.loss(&x) - pc.loss(&xg)).abs() < 1e-9);
            assert!(cf.data.delta.iter().all(|&d| d >= 0.0));
            assert!(cf.data.epsilon >= 0.0);
            assert!(cf.data.gammas[0] > 0.0);
            assert!(cf.data.gammas.windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn dimension_reduction_cases() {
        let sphere = ProblemSpec::from_rows(&eye(3), &[0.0; 3], &eye(3), &[0.0; 3], 1.0).unwrap();
        let cf = to_canonical_form(&sphere, &cfg()).unwrap();
        let dr = dimension_reduce(&cf.data, &cfg());
        assert_eq!(dr.n_bar(), 1);
        assert_eq!(dr.delta_diag(), vec![1.0]);
        assert_eq!(dr.w0(), DVector::from_vec(vec![0.0]));
        assert_eq!(dr.k_star, 1.0);
        assert!(dr.is_regular());

        // simple eigenvalues, m0 = 1 with ε > 0: nothing to reduce
        let p = ProblemSpec::from_rows(&eye(3), &[0.0; 3], &[vec![2.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]], &[1.0, 1.0, 1.0], 1.0)
            .unwrap();
        let cf = to_canonical_form(&p, &cfg()).unwrap();
        let dr = dimension_reduce(&cf.data, &cfg());
        assert_eq!(dr.n_bar(), 3);
        assert!(dr.has_null_var);
        let direct = dr.problem();
        assert_eq!(direct.quadratic, cf.problem.quadratic);
        assert_eq!(direct.target, cf.problem.target);
        assert_eq!(direct.linear, cf.problem.linear);

        // m0 = 2, ε = 0, q = 1: null block dropped
        let p = ProblemSpec::from_rows(&eye(3), &[0.0; 3], &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]], &[0.0; 3], 1.0)
            .unwrap();
        let cf = to_canonical_form(&p, &cfg()).unwrap();
        assert_eq!(cf.data.null_dim, 2);
        let dr = dimension_reduce(&cf.data, &cfg());
        assert_eq!(dr.n_bar(), 1);
        assert!(dr.dropped_null_block);
        assert!(dr.is_regular());
    }
}
