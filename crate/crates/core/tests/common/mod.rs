#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qcls_core::linalg::orthogonal_completion;
use qcls_core::{ProblemSpec, Sense, SolveReport, SymMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn eye(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn diag(d: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    (0..n).map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect()
}

/// The worked example family: `A = [[1,0,0],[0,1,-1],[0,-1,1+κ]]`, `t = 1`,
/// unit sphere constraint.
pub fn worked_example(kappa: f64) -> ProblemSpec {
    ProblemSpec::from_rows(
        &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, -1.0], vec![0.0, -1.0, 1.0 + kappa]],
        &[1.0, 1.0, 1.0],
        &eye(3),
        &[0.0; 3],
        1.0,
    )
    .unwrap()
}

/// `min x1²` in coordinates `(x1, x0)` subject to `x'Bx = k`.
pub fn singular_objective(b: &[Vec<f64>], k: f64) -> ProblemSpec {
    ProblemSpec::from_rows(&diag(&[1.0, 0.0]), &[0.0; 2], b, &[0.0; 2], k).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-r..r))
}

/// PSD matrix of rank `rank` with entries roughly in `[-3, 3]`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.2..1.2));
    let mut a = &m * m.transpose();
    if rank == n {
        a += DMatrix::identity(n, n) * 0.2;
    }
    let amax = a.amax();
    if amax > 3.0 {
        a *= 3.0 / amax;
    }
    a
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-r..r));
    (&m + m.transpose()) * 0.5
}

/// Random equality problem; rank of `A` is `n` with probability `1 - p_singular`.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, p_singular: f64) -> ProblemSpec {
    let rank = if n > 1 && rng.random_bool(p_singular) { rng.random_range(1..n) } else { n };
    ProblemSpec::new(
        SymMatrix::new(random_psd(rng, n, rank)).unwrap(),
        random_vec(rng, n, 3.0),
        SymMatrix::new(random_sym(rng, n, 3.0)).unwrap(),
        random_vec(rng, n, 3.0),
        rng.random_range(-3.0..3.0),
        Sense::Equality,
    )
    .unwrap()
}

/// Random orthogonal matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::identity(n, n);
    for _ in 0..3 {
        let mut u = random_vec(rng, n, 1.0);
        u.normalize_mut();
        q = orthogonal_completion(&u) * q;
    }
    q
}

/// Relative feasibility residual of `x`.
pub fn feas_residual(p: &ProblemSpec, x: &DVector<f64>) -> f64 {
    let q = p.constraint(x);
    let q = match p.sense {
        Sense::Equality => q.abs(),
        Sense::LessEqual => q.max(0.0),
    };
    q / p.constraint_scale(x)
}

/// Checks feasibility and optimality of `count` samples of a report.
pub fn check_samples(p: &ProblemSpec, rep: &SolveReport, count: usize, seed: u64, feas: f64, loss: f64) -> Result<(), String> {
    let pts = rep.sample(count, seed, 1.0).map_err(|e| e.to_string())?;
    for x in &pts {
        let r = feas_residual(p, x);
        if r > feas {
            return Err(format!("sample {x:?} violates constraint by {r:e}"));
        }
        let dl = (p.loss(x) - rep.infimum()).abs();
        if dl > loss * (1.0 + rep.infimum()) {
            return Err(format!("sample loss {} differs from infimum {} by {dl:e}", p.loss(x), rep.infimum()));
        }
    }
    Ok(())
}
