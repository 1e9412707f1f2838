//! Brute-force minimizer for small problems (`n <= 3`).
//!
//! Scans a grid, keeps points close to the constraint, projects them onto it
//! with Newton steps along `∇Q`, and polishes the most promising ones by
//! projected gradient descent on the loss. Shares no code with the analytic
//! solver beyond problem evaluation.

use nalgebra::DVector;
use thiserror::Error;

use crate::problem::{ProblemSpec, Sense};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub lo: f64,
    pub hi: f64,
    /// Grid points per axis.
    pub resolution: usize,
    /// Fixed acceptance band for `|Q|`; `None` uses a local band of about
    /// one cell's worth of variation of `Q`.
    pub feas_band: Option<f64>,
    pub polish_steps: usize,
    /// Number of lowest-loss clusters that get polished.
    pub max_clusters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            resolution: 201,
            feas_band: None,
            polish_steps: 200,
            max_clusters: 64,
        }
    }
}

impl OracleConfig {
    pub fn with_box(mut self, half_width: f64) -> Self {
        self.lo = -half_width;
        self.hi = half_width;
        self
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn cell(&self) -> f64 {
        (self.hi - self.lo) / (self.resolution - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle supports n <= 3, got n = {0}")]
    TooLarge(usize),
    #[error("invalid oracle settings: {0}")]
    InvalidConfig(String),
    #[error("no feasible points found in the search box")]
    NoFeasiblePoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub approx_infimum: f64,
    /// Distinct minimizers, lowest loss first.
    pub best_points: Vec<DVector<f64>>,
    /// Every polished cluster representative with its loss.
    pub clusters: Vec<(DVector<f64>, f64)>,
    /// Grid points after projection onto the constraint.
    pub accepted: Vec<DVector<f64>>,
    pub resolution: usize,
    pub cell: f64,
}

impl OracleResult {
    /// Distance from `x` to the nearest accepted point.
    pub fn distance_to_accepted(&self, x: &DVector<f64>) -> f64 {
        self.accepted
            .iter()
            .map(|a| (a - x).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

fn gradient_q(p: &ProblemSpec, x: &DVector<f64>) -> DVector<f64> {
    (p.quadratic.matrix() * x + &p.linear) * 2.0
}

fn gradient_l(p: &ProblemSpec, x: &DVector<f64>) -> DVector<f64> {
    p.objective.matrix() * (x - &p.target) * 2.0
}

fn inside(p: &ProblemSpec, x: &DVector<f64>) -> bool {
    p.sense == Sense::LessEqual && p.constraint(x) < 0.0
}

/// Newton iterations on `Q(x) = 0` along `∇Q`.
fn project(p: &ProblemSpec, x: &DVector<f64>) -> Option<DVector<f64>> {
    if inside(p, x) {
        return Some(x.clone());
    }
    let mut x = x.clone();
    for _ in 0..60 {
        let q = p.constraint(&x);
        let scale = p.constraint_scale(&x);
        if q.abs() <= 1e-14 * scale {
            return Some(x);
        }
        let g = gradient_q(p, &x);
        let gg = g.norm_squared();
        if gg <= 1e-300 {
            return None;
        }
        x -= &g * (q / gg);
    }
    let q = p.constraint(&x);
    (q.abs() <= 1e-10 * p.constraint_scale(&x)).then_some(x)
}

fn in_box(x: &DVector<f64>, cfg: &OracleConfig) -> bool {
    let slack = cfg.cell();
    x.iter().all(|&v| v >= cfg.lo - slack && v <= cfg.hi + slack)
}

/// Projected gradient descent on `L` along the constraint, with step halving.
fn polish(p: &ProblemSpec, x: &DVector<f64>, cfg: &OracleConfig) -> DVector<f64> {
    let mut x = x.clone();
    let mut loss = p.loss(&x);
    let mut step = 0.1 * cfg.cell().max(1e-3);
    for _ in 0..cfg.polish_steps {
        let g = gradient_l(p, &x);
        let dir = if inside(p, &x) {
            g
        } else {
            let n = gradient_q(p, &x);
            let nn = n.norm_squared();
            if nn > 0.0 {
                &g - &n * (g.dot(&n) / nn)
            } else {
                g
            }
        };
        if dir.norm() <= 1e-10 {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial = &x - &dir * step;
            if let Some(y) = project(p, &trial) {
                let l = p.loss(&y);
                if l < loss && in_box(&y, cfg) {
                    x = y;
                    loss = l;
                    improved = true;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Number of grid points with `|Q| <= band`, without projection.
pub fn grid_band_count(p: &ProblemSpec, cfg: &OracleConfig, band: f64) -> Result<usize, OracleError> {
    let n = p.dim();
    if n > 3 {
        return Err(OracleError::TooLarge(n));
    }
    let h = cfg.cell();
    let res = cfg.resolution;
    let mut x = DVector::zeros(n);
    let mut count = 0;
    for idx in 0..res.pow(n as u32) {
        let mut rem = idx;
        for i in 0..n {
            x[i] = cfg.lo + h * (rem % res) as f64;
            rem /= res;
        }
        if p.constraint(&x).abs() <= band {
            count += 1;
        }
    }
    Ok(count)
}

/// Grid search for `min L` subject to the problem's constraint.
pub fn brute_force_min(p: &ProblemSpec, cfg: &OracleConfig) -> Result<OracleResult, OracleError> {
    let n = p.dim();
    if n > 3 {
        return Err(OracleError::TooLarge(n));
    }
    if cfg.resolution < 2 || cfg.hi.is_nan() || cfg.lo.is_nan() || cfg.hi <= cfg.lo {
        return Err(OracleError::InvalidConfig(format!(
            "resolution {} over [{}, {}]",
            cfg.resolution, cfg.lo, cfg.hi
        )));
    }
    let h = cfg.cell();
    let res = cfg.resolution;
    let bmax = crate::linalg::max_abs(p.quadratic.matrix());
    let total = res.pow(n as u32);

    let mut accepted = Vec::new();
    let mut x = DVector::zeros(n);
    for idx in 0..total {
        let mut rem = idx;
        for i in 0..n {
            x[i] = cfg.lo + h * (rem % res) as f64;
            rem /= res;
        }
        let q = p.constraint(&x);
        let ok = if p.sense == Sense::LessEqual && q <= 0.0 {
            true
        } else {
            let band = cfg
                .feas_band
                .unwrap_or_else(|| h * gradient_q(p, &x).lp_norm(1) + h * h * bmax * n as f64);
            q.abs() <= band
        };
        if ok {
            if let Some(y) = project(p, &x) {
                if in_box(&y, cfg) {
                    accepted.push(y);
                }
            }
        }
    }
    if accepted.is_empty() {
        return Err(OracleError::NoFeasiblePoints);
    }

    let mut order: Vec<(f64, usize)> = accepted.iter().enumerate().map(|(i, x)| (p.loss(x), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sep = 10.0 * h;
    let mut reps: Vec<usize> = Vec::new();
    for &(_, i) in &order {
        if reps.len() >= cfg.max_clusters {
            break;
        }
        if reps.iter().all(|&j| (&accepted[i] - &accepted[j]).norm() > sep) {
            reps.push(i);
        }
    }

    let mut clusters: Vec<(DVector<f64>, f64)> = reps
        .iter()
        .map(|&i| {
            let y = polish(p, &accepted[i], cfg);
            let l = p.loss(&y);
            (y, l)
        })
        .collect();
    clusters.sort_by(|a, b| a.1.total_cmp(&b.1));
    let approx_infimum = clusters[0].1;
    let cutoff = approx_infimum + 1e-6_f64.max(1e-3 * approx_infimum);
    let mut best_points: Vec<DVector<f64>> = Vec::new();
    for (y, l) in &clusters {
        if *l <= cutoff && best_points.iter().all(|b| (b - y).norm() > sep) {
            best_points.push(y.clone());
        }
    }
    Ok(OracleResult {
        approx_infimum,
        best_points,
        clusters,
        accepted,
        resolution: res,
        cell: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn circle() {
        let p = ProblemSpec::from_rows(&eye(2), &[0.0; 2], &eye(2), &[0.0; 2], 1.0).unwrap();
        let r = brute_force_min(&p, &OracleConfig::default()).unwrap();
        assert!((r.approx_infimum - 1.0).abs() < 1e-4);
        for b in &r.best_points {
            assert!((b.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn worked_definite() {
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, -1.0], vec![0.0, -1.0, 2.5]];
        let p = ProblemSpec::from_rows(&a, &[1.0; 3], &eye(3), &[0.0; 3], 1.0).unwrap();
        let r = brute_force_min(&p, &OracleConfig::default().with_resolution(61)).unwrap();
        assert!((r.approx_infimum - 0.370).abs() < 1e-3);
    }

    #[test]
    fn hyperbola_twin_minima() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let b = vec![vec![1.0, 0.0], vec![0.0, -1.0]];
        let p = ProblemSpec::from_rows(&a, &[0.0; 2], &b, &[0.0; 2], 1.0).unwrap();
        let r = brute_force_min(&p, &OracleConfig::default()).unwrap();
        assert!((r.approx_infimum - 1.0).abs() < 1e-6);
        assert_eq!(r.best_points.len(), 2);
        for x in &r.best_points {
            assert!((x[0].abs() - 1.0).abs() < 1e-3 && x[1].abs() < 1e-3);
        }
    }

    #[test]
    fn infeasible_box() {
        let p = ProblemSpec::from_rows(&eye(2), &[0.0; 2], &eye(2), &[0.0; 2], -1.0).unwrap();
        assert_eq!(
            brute_force_min(&p, &OracleConfig::default().with_resolution(41)),
            Err(OracleError::NoFeasiblePoints)
        );
    }

    #[test]
    fn rejects_large_dimension() {
        let p = ProblemSpec::from_rows(&eye(4), &[0.0; 4], &eye(4), &[0.0; 4], 1.0).unwrap();
        assert_eq!(brute_force_min(&p, &OracleConfig::default()), Err(OracleError::TooLarge(4)));
    }
}
