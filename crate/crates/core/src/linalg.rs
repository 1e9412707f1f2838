//! Dense symmetric-matrix primitives.
//!
//! Everything downstream works with small dense matrices, so the eigensolver
//! here is a plain cyclic Jacobi iteration. It is slow for large `n` but very
//! accurate, and it returns orthonormal eigenvectors even for clustered
//! eigenvalues, which the canonical-form construction relies on.

use nalgebra::{DMatrix, DVector};

use crate::error::LinalgError;

/// Relative asymmetry accepted at ingest before a matrix is rejected.
pub const ASYMMETRY_TOL: f64 = 1e-8;

const JACOBI_OFF_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// `max(1, max |m_ij|)`, the scale used by all relative tolerances.
pub fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max(1, max |v_i|)`.
pub fn vec_scale(v: &DVector<f64>) -> f64 {
    v.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// A real symmetric matrix. Entries are exactly symmetric after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrizes `m` as `(m + m')/2`, rejecting non-square or non-finite
    /// input and asymmetry above `1e-8 * scale`.
    pub fn new(m: DMatrix<f64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let scale = scale_of(&m);
        let asym = max_abs(&(&m - m.transpose()));
        if asym > ASYMMETRY_TOL * scale {
            return Err(LinalgError::Asymmetric { asymmetry: asym });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the asymmetry check. For products like `T'BT`
    /// that are symmetric up to rounding.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let inner = (&m + m.transpose()) * 0.5;
        Self { inner }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(LinalgError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            inner: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn scale(&self) -> f64 {
        scale_of(&self.inner)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Sets `(i,j)` and `(j,i)` together.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.inner[(i, j)] = value;
        self.inner[(j, i)] = value;
    }

    pub fn neg(&self) -> Self {
        Self {
            inner: -&self.inner,
        }
    }

    /// `x' S x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.inner * x))
    }

    /// `T' S T` for a square or rectangular `T`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> SymMatrix {
        Self::symmetrized(t.transpose() * &self.inner * t)
    }

    /// Principal sub-block on the index range `[start, start+len)`.
    pub fn principal_block(&self, start: usize, len: usize) -> SymMatrix {
        Self {
            inner: self.inner.view((start, start), (len, len)).into_owned(),
        }
    }
}

/// One group of (numerically) equal eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Mean of the clustered eigenvalues.
    pub value: f64,
    pub multiplicity: usize,
    /// First column of the cluster in [`Spectrum::basis`].
    pub start: usize,
}

impl Cluster {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.multiplicity
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues in non-increasing order.
    pub values: Vec<f64>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub basis: DMatrix<f64>,
    pub clusters: Vec<Cluster>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `max(1, max |eigenvalue|)`.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn cluster_basis(&self, cluster: &Cluster) -> DMatrix<f64> {
        self.basis.columns(cluster.start, cluster.multiplicity).into_owned()
    }

    /// Reassembles `basis * diag(values) * basis'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.basis * d * self.basis.transpose()
    }

    /// Signature `(positive, zero, negative)` with zero meaning
    /// `|λ| <= tol * scale`.
    pub fn signature(&self, tol: f64) -> (usize, usize, usize) {
        let cut = tol * self.scale();
        let pos = self.values.iter().filter(|&&v| v > cut).count();
        let neg = self.values.iter().filter(|&&v| v < -cut).count();
        (pos, self.dim() - pos - neg, neg)
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalue clustering.
///
/// Eigenvalues within `tol_cluster * max(1, max|λ|)` of their neighbour are
/// merged into one cluster. Eigenvector signs are fixed so that the entry of
/// largest magnitude is positive.
pub fn spectral_decompose(s: &SymMatrix, tol_cluster: f64) -> Result<Spectrum, LinalgError> {
    spectral_decompose_named(s, tol_cluster, "symmetric matrix")
}

/// Like [`spectral_decompose`] but names the matrix in convergence errors.
pub fn spectral_decompose_named(
    s: &SymMatrix,
    tol_cluster: f64,
    name: &str,
) -> Result<Spectrum, LinalgError> {
    let n = s.dim();
    let (diag, vecs) = jacobi_eigen(s.matrix(), name)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut basis = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut v = vecs.column(src).into_owned();
        let lead = v
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() + 1e-12 { x } else { best });
        if lead < 0.0 {
            v = -v;
        }
        basis.set_column(col, &v);
    }

    let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let gap = tol_cluster * scale;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let merge = i > 0 && values[i - 1] - v <= gap;
        if merge {
            let c = clusters.last_mut().expect("cluster exists");
            c.multiplicity += 1;
            *sums.last_mut().expect("sum exists") += v;
        } else {
            clusters.push(Cluster {
                value: v,
                multiplicity: 1,
                start: i,
            });
            sums.push(v);
        }
    }
    for (c, sum) in clusters.iter_mut().zip(sums) {
        c.value = sum / c.multiplicity as f64;
    }

    Ok(Spectrum {
        values,
        basis,
        clusters,
    })
}

/// Cyclic Jacobi rotations. Returns unsorted eigenvalues and eigenvectors.
fn jacobi_eigen(m: &DMatrix<f64>, name: &str) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = JACOBI_OFF_TOL * scale_of(m);

    let off_norm = |a: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                matrix: name.to_string(),
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                if t == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
}

/// Number of eigenvalues with `|λ| > tol_rank * max(1, max|λ|)`.
pub fn numeric_rank(spec: &Spectrum, tol_rank: f64) -> usize {
    let cut = tol_rank * spec.scale();
    spec.values.iter().filter(|v| v.abs() > cut).count()
}

/// Splits `b = B x_b + b_perp` with `x_b = B⁻b` (Moore–Penrose) and
/// `b_perp` the projection of `b` onto the numeric null space of `B`.
pub fn mp_split(
    b_mat: &SymMatrix,
    b: &DVector<f64>,
    tol_rank: f64,
) -> Result<(DVector<f64>, DVector<f64>), LinalgError> {
    if b.len() != b_mat.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: b_mat.dim(),
            found: b.len(),
        });
    }
    let spec = spectral_decompose(b_mat, 0.0)?;
    Ok(mp_split_with(&spec, b, tol_rank))
}

/// [`mp_split`] on an existing decomposition.
pub fn mp_split_with(spec: &Spectrum, b: &DVector<f64>, tol_rank: f64) -> (DVector<f64>, DVector<f64>) {
    let n = spec.dim();
    let cut = tol_rank * spec.scale();
    let mut x_b = DVector::zeros(n);
    let mut b_perp = DVector::zeros(n);
    for (i, &lambda) in spec.values.iter().enumerate() {
        let u = spec.basis.column(i);
        let coef = u.dot(b);
        if lambda.abs() > cut {
            x_b.axpy(coef / lambda, &u, 1.0);
        } else {
            b_perp.axpy(coef, &u, 1.0);
        }
    }
    (x_b, b_perp)
}

/// Orthogonal matrix whose first column is the unit vector `u`.
///
/// Built from a single Householder reflection.
pub fn orthogonal_completion(u: &DVector<f64>) -> DMatrix<f64> {
    let n = u.len();
    let mut e1 = DVector::zeros(n);
    e1[0] = 1.0;
    if u[0] >= 0.0 {
        // H e1 = -u with v = e1 + u; flip the first column afterwards.
        let v = &e1 + u;
        let vv = v.dot(&v);
        let mut h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
        let c0 = -h.column(0).into_owned();
        h.set_column(0, &c0);
        h
    } else {
        let v = &e1 - u;
        let vv = v.dot(&v);
        DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
        SymMatrix::symmetrized(m)
    }

    #[test]
    fn identity_is_one_cluster() {
        let spec = spectral_decompose(&SymMatrix::identity(3), 1e-9).unwrap();
        assert_eq!(spec.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(spec.clusters.len(), 1);
        assert_eq!(spec.clusters[0].multiplicity, 3);
    }

    #[test]
    fn diagonal_clusters_are_sorted() {
        let s = SymMatrix::from_diagonal(&[1.0 / 3.0, 2.0, 1.0]);
        let spec = spectral_decompose(&s, 1e-9).unwrap();
        let got: Vec<(f64, usize)> = spec.clusters.iter().map(|c| (c.value, c.multiplicity)).collect();
        assert_eq!(got.len(), 3);
        assert_abs_diff_eq!(got[0].0, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got[1].0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got[2].0, 1.0 / 3.0, epsilon = 1e-15);
        assert!(got.iter().all(|c| c.1 == 1));
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 6, 13, 50] {
            let s = random_sym(n, &mut rng);
            let spec = spectral_decompose(&s, 1e-9).unwrap();
            let scale = spec.scale();
            let resid = max_abs(&(spec.reconstruct() - s.matrix()));
            assert!(resid <= 1e-12 * scale * (n as f64).max(1.0), "n={n} resid={resid}");
            let orth = max_abs(&(spec.basis.transpose() * &spec.basis - DMatrix::identity(n, n)));
            assert!(orth <= 1e-10, "n={n} orth={orth}");
            assert!(spec.values.windows(2).all(|w| w[0] >= w[1]));
            let total: usize = spec.clusters.iter().map(|c| c.multiplicity).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn repeated_eigenvalue_gets_orthonormal_cluster() {
        // Q diag(3,3,-1) Q' with a non-trivial rotation.
        let u = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let q = orthogonal_completion(&u);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, -1.0]));
        let s = SymMatrix::symmetrized(&q * d * q.transpose());
        let spec = spectral_decompose(&s, 1e-9).unwrap();
        assert_eq!(spec.clusters.len(), 2);
        assert_eq!(spec.clusters[0].multiplicity, 2);
        let cb = spec.cluster_basis(&spec.clusters[0]);
        let gram = cb.transpose() * &cb;
        assert!(max_abs(&(gram - DMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn rank_examples() {
        let a0 = SymMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ])
        .unwrap();
        let spec = spectral_decompose(&a0, 1e-9).unwrap();
        assert_eq!(numeric_rank(&spec, 1e-9), 2);

        let a32 = SymMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, -1.0],
            vec![0.0, -1.0, 2.5],
        ])
        .unwrap();
        let spec = spectral_decompose(&a32, 1e-9).unwrap();
        assert_eq!(numeric_rank(&spec, 1e-9), 3);

        let spec = spectral_decompose(&SymMatrix::zeros(4), 1e-9).unwrap();
        assert_eq!(numeric_rank(&spec, 1e-9), 0);
    }

    #[test]
    fn mp_split_examples() {
        let (xb, bp) = mp_split(&SymMatrix::identity(2), &DVector::from_vec(vec![3.0, 4.0]), 1e-9).unwrap();
        assert_abs_diff_eq!(xb, DVector::from_vec(vec![3.0, 4.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(bp, DVector::zeros(2), epsilon = 1e-15);

        let (xb, bp) = mp_split(
            &SymMatrix::from_diagonal(&[1.0, 0.0]),
            &DVector::from_vec(vec![1.0, 1.0]),
            1e-9,
        )
        .unwrap();
        assert_abs_diff_eq!(xb, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(bp, DVector::from_vec(vec![0.0, 1.0]), epsilon = 1e-15);

        let (xb, bp) = mp_split(&SymMatrix::zeros(2), &DVector::from_vec(vec![1.0, 2.0]), 1e-9).unwrap();
        assert_abs_diff_eq!(xb, DVector::zeros(2), epsilon = 1e-15);
        assert_abs_diff_eq!(bp, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-15);
    }

    #[test]
    fn mp_split_identities_on_singular_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..7);
            let rank = rng.random_range(0..n);
            let mut u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            u.normalize_mut();
            let q = orthogonal_completion(&u);
            let d = DVector::from_fn(n, |i, _| if i < rank { rng.random_range(0.5..3.0) } else { 0.0 });
            let b_mat = SymMatrix::symmetrized(&q * DMatrix::from_diagonal(&d) * q.transpose());
            let b = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let (xb, bp) = mp_split(&b_mat, &b, 1e-9).unwrap();
            let recon = b_mat.matrix() * &xb + &bp;
            assert!((recon - &b).amax() < 1e-12);
            assert!(bp.dot(&xb).abs() < 1e-12);
            assert!((b_mat.matrix() * &bp).amax() < 1e-12);
        }
    }

    #[test]
    fn completion_is_orthogonal_with_given_first_column() {
        for u in [vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.6, -0.8], vec![-0.5, 0.5, std::f64::consts::FRAC_1_SQRT_2]] {
            let mut u = DVector::from_vec(u);
            u.normalize_mut();
            let q = orthogonal_completion(&u);
            assert!((q.column(0) - &u).amax() < 1e-15);
            assert!(max_abs(&(q.transpose() * &q - DMatrix::identity(3, 3))) < 1e-15);
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(LinalgError::Asymmetric { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-12, 1.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
    }
}
