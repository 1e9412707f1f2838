//! Centred problems with a singular objective (`r < n`).
//!
//! In simplified form, with `x = (x1, y0, z0)`, the constraint reads
//!
//! ```text
//! Q(x) = Q1(x1) + 2 (C10' x1 + c0)' y0 + (z0 - c)' Γ0 (z0 - c)
//! Q1(x1) = x1' B11 x1 + 2 b1' x1 - k1,     c = -Γ0⁻¹ d0
//! ```
//!
//! and the loss is `|x1|²`. Whether the loss can reach zero is decided from
//! the signs of `k1`, `c0`, `C10` and `Γ0`; otherwise the problem projects
//! onto `x1` alone.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::SolverConfig;
use crate::error::SolveError;
use crate::linalg::{self, SymMatrix};
use crate::problem::{ProblemSpec, Sense};
use crate::solution::{gaussian, unit_vector, ApproachPath, SetBlock, SolutionSet};
use crate::solver::SolveReport;
use crate::transforms::SimplifiedFormData;

/// Coordinate indices paired with weights.
type Weighted = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdCase {
    Perfect,
    EssentiallyPerfect,
    ProjectedImperfect,
}

impl PsdCase {
    pub fn label(self) -> &'static str {
        match self {
            PsdCase::Perfect => "perfect",
            PsdCase::EssentiallyPerfect => "essentially perfect",
            PsdCase::ProjectedImperfect => "projected imperfect",
        }
    }
}

/// Which of the three `s0` regimes applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdBranch {
    /// `s0 = 0`
    S0Zero,
    /// `s0 = n - r`
    S0Full,
    /// `0 < s0 < n - r`
    S0Mid,
}

impl PsdBranch {
    pub fn label(self) -> &'static str {
        match self {
            PsdBranch::S0Zero => "s0 = 0",
            PsdBranch::S0Full => "s0 = n - r",
            PsdBranch::S0Mid => "0 < s0 < n - r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberKind {
    FullSpace,
    SinglePoint,
    QuadricSlice,
    UnionOverLinear,
}

/// `{(y0, z0) : (z0 - c)'Γ0(z0 - c) + 2 lin' y0 = level}`
#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub gamma0: Vec<f64>,
    pub center: DVector<f64>,
    pub lin: DVector<f64>,
    pub level: f64,
}

impl Fiber {
    pub fn y_dim(&self) -> usize {
        self.lin.len()
    }

    pub fn z_dim(&self) -> usize {
        self.center.len()
    }

    pub fn dim(&self) -> usize {
        self.y_dim() + self.z_dim()
    }

    fn has_lin(&self) -> bool {
        self.lin.iter().any(|&v| v != 0.0)
    }

    pub fn kind(&self) -> FiberKind {
        if self.has_lin() {
            FiberKind::UnionOverLinear
        } else if self.z_dim() == 0 {
            FiberKind::FullSpace
        } else if self.is_single_point() {
            FiberKind::SinglePoint
        } else {
            FiberKind::QuadricSlice
        }
    }

    /// Only `z0 = c` qualifies and `y0` is absent.
    pub fn is_single_point(&self) -> bool {
        if self.y_dim() > 0 || self.has_lin() {
            return false;
        }
        if self.z_dim() == 0 {
            return true;
        }
        let pos = self.gamma0.iter().any(|&g| g > 0.0);
        let neg = self.gamma0.iter().any(|&g| g < 0.0);
        self.level == 0.0 && !(pos && neg)
    }

    /// `(z0 - c)'Γ0(z0 - c) + 2 lin'y0 - level`
    pub fn relation(&self, v: &DVector<f64>) -> f64 {
        let ny = self.y_dim();
        let mut s = 2.0 * self.lin.dot(&v.rows(0, ny)) - self.level;
        for (i, g) in self.gamma0.iter().enumerate() {
            let d = v[ny + i] - self.center[i];
            s += g * d * d;
        }
        s
    }

    /// Indices and weights `|γ|` of the side carrying the level, and of the other side.
    fn sides(&self) -> (Weighted, Weighted) {
        let up = self.level >= 0.0;
        let mut carry = Vec::new();
        let mut other = Vec::new();
        for (i, &g) in self.gamma0.iter().enumerate() {
            if (g > 0.0) == up {
                carry.push((i, g.abs()));
            } else {
                other.push((i, g.abs()));
            }
        }
        (carry, other)
    }

    pub fn representative(&self) -> DVector<f64> {
        let ny = self.y_dim();
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(ny, self.z_dim()).copy_from(&self.center);
        if self.has_lin() {
            let y = &self.lin * (self.level / (2.0 * self.lin.norm_squared()));
            v.rows_mut(0, ny).copy_from(&y);
        } else if self.level != 0.0 {
            let (carry, _) = self.sides();
            if let Some(&(i, w)) = carry.first() {
                v[ny + i] += (self.level.abs() / w).sqrt();
            }
        }
        v
    }

    /// A random member; `relation` vanishes up to rounding.
    pub fn sample(&self, rng: &mut ChaCha8Rng, spread: f64) -> DVector<f64> {
        let ny = self.y_dim();
        let s0 = self.z_dim();
        let mut v = DVector::zeros(self.dim());
        if self.has_lin() {
            let z = &self.center + gaussian(rng, s0) * spread;
            v.rows_mut(ny, s0).copy_from(&z);
            let y = gaussian(rng, ny) * spread;
            v.rows_mut(0, ny).copy_from(&y);
            let r = self.relation(&v);
            let fix = &self.lin * (-r / (2.0 * self.lin.norm_squared()));
            let y = &y + fix;
            v.rows_mut(0, ny).copy_from(&y);
            return v;
        }
        let y = gaussian(rng, ny) * spread;
        v.rows_mut(0, ny).copy_from(&y);
        let mut z = self.center.clone();
        let (carry, other) = self.sides();
        if !carry.is_empty() {
            let mut s = self.level.abs();
            for &(i, w) in &other {
                let t = rng.sample::<f64, _>(rand_distr::StandardNormal) * spread;
                z[i] += t;
                s += w * t * t;
            }
            let dir = unit_vector(rng, carry.len());
            for (j, &(i, w)) in carry.iter().enumerate() {
                z[i] += (s / w).sqrt() * dir[j];
            }
        }
        v.rows_mut(ny, s0).copy_from(&z);
        v
    }
}

/// `{x0 : x0'B00 x0 + 2 b0'x0 - k <= 0}`, known to contain `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct SublevelFiber {
    pub b00: SymMatrix,
    pub b0: DVector<f64>,
    pub k: f64,
    pub point: DVector<f64>,
}

impl SublevelFiber {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.b00.quad_form(x) + 2.0 * self.b0.dot(x) - self.k
    }

    pub fn representative(&self) -> DVector<f64> {
        self.point.clone()
    }

    /// Random point pulled toward the representative until it is inside.
    pub fn sample(&self, rng: &mut ChaCha8Rng, spread: f64) -> DVector<f64> {
        let step = gaussian(rng, self.point.len()) * (spread * linalg::vec_scale(&self.point));
        let mut t = 1.0;
        for _ in 0..64 {
            let x = &self.point + &step * t;
            if self.value(&x) <= 0.0 {
                return x;
            }
            t *= 0.5;
        }
        self.point.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdClassification {
    pub case: PsdCase,
    pub branch: PsdBranch,
    pub k1: f64,
    /// `|k1|` relative to its zero threshold scale.
    pub k1_margin: f64,
    /// `|c0|_∞` relative to its zero threshold scale.
    pub c0_margin: f64,
    /// `|C10|_max` relative to its zero threshold scale.
    pub c10_margin: f64,
    pub k1_zero: bool,
    pub c0_zero: bool,
    pub c10_zero: bool,
    /// `X0(0)` when perfect.
    pub witness: Option<Fiber>,
    /// The reduced problem in `x1` when projected.
    pub projected: Option<ProblemSpec>,
}

/// Classifies a problem in simultaneous-diagonal simplified form.
pub fn classify_psd(p: &ProblemSpec, data: &SimplifiedFormData, cfg: &SolverConfig) -> PsdClassification {
    let n = data.n();
    let r = data.r;
    let s0 = data.s0;
    let branch = if s0 == 0 {
        PsdBranch::S0Zero
    } else if s0 == n - r {
        PsdBranch::S0Full
    } else {
        PsdBranch::S0Mid
    };

    let k1_scale = 1.0_f64
        .max(p.level.abs())
        .max(data.d0.iter().zip(&data.gamma0).map(|(d, g)| d * d / g.abs()).sum::<f64>());
    let k1_margin = data.k1.abs() / k1_scale;
    let k1_zero = k1_margin <= cfg.tol_class;
    let c0_margin = if data.c0.is_empty() {
        0.0
    } else {
        data.c0.amax() / linalg::vec_scale(&p.linear)
    };
    let c0_zero = c0_margin <= cfg.tol_class;
    let c10_margin = linalg::max_abs(&data.c10) / p.quadratic.scale().max(1.0);
    let c10_zero = c10_margin <= cfg.tol_class;
    let k1 = if k1_zero { 0.0 } else { data.k1 };
    let positive_eig = !k1_zero && data.gamma0.iter().any(|&g| g * k1 > 0.0);

    let perfect = match branch {
        PsdBranch::S0Zero => (k1_zero && c0_zero) || !c0_zero,
        PsdBranch::S0Full => k1_zero || positive_eig,
        PsdBranch::S0Mid => (k1_zero && c0_zero) || (positive_eig && c0_zero) || !c0_zero,
    };
    let case = if perfect {
        PsdCase::Perfect
    } else if branch == PsdBranch::S0Full || c10_zero {
        PsdCase::ProjectedImperfect
    } else {
        PsdCase::EssentiallyPerfect
    };

    let witness = (case == PsdCase::Perfect).then(|| Fiber {
        gamma0: data.gamma0.clone(),
        center: data.z_center(),
        lin: if c0_zero {
            DVector::zeros(data.y_dim())
        } else {
            data.c0.clone()
        },
        level: k1,
    });
    let projected = (case == PsdCase::ProjectedImperfect).then(|| ProblemSpec {
        objective: SymMatrix::identity(r),
        target: DVector::zeros(r),
        quadratic: data.b11.clone(),
        linear: data.b1.clone(),
        level: k1,
        sense: Sense::Equality,
    });

    PsdClassification {
        case,
        branch,
        k1,
        k1_margin,
        c0_margin,
        c10_margin,
        k1_zero,
        c0_zero,
        c10_zero,
        witness,
        projected,
    }
}

#[derive(Debug, Clone)]
pub struct PsdOutcome {
    pub classification: PsdClassification,
    /// Solution set in the coordinates of the simplified form.
    pub set: SolutionSet,
    /// Report of the delegated reduced solve.
    pub projected_report: Option<Box<SolveReport>>,
}

fn embed_block(n: usize, start: usize, len: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, len);
    for j in 0..len {
        e[(start + j, j)] = 1.0;
    }
    e
}

/// Solves a classified problem; `delegate` solves the projected `x1` problem.
pub fn solve_psd(
    data: &SimplifiedFormData,
    class: PsdClassification,
    delegate: &dyn Fn(&ProblemSpec) -> Result<SolveReport, SolveError>,
) -> Result<PsdOutcome, SolveError> {
    let n = data.n();
    let r = data.r;
    let ny = data.y_dim();
    match class.case {
        PsdCase::Perfect => {
            let fiber = class.witness.clone().expect("perfect case carries its fiber");
            let set = SolutionSet::with_blocks(
                DVector::zeros(n),
                vec![SetBlock::Fiber {
                    fiber,
                    embed: embed_block(n, r, n - r),
                }],
                0.0,
            );
            Ok(PsdOutcome {
                classification: class,
                set,
                projected_report: None,
            })
        }
        PsdCase::EssentiallyPerfect => {
            // Column of C10 with the largest norm gives a direction along
            // which C10'x1 does not vanish.
            let j = (0..ny)
                .max_by(|&a, &b| {
                    data.c10
                        .column(a)
                        .norm()
                        .partial_cmp(&data.c10.column(b).norm())
                        .unwrap()
                })
                .expect("essentially perfect needs y0");
            let direction = data.c10.column(j).into_owned();
            let path = ApproachPath::new(
                direction,
                data.b11.matrix().clone(),
                data.b1.clone(),
                class.k1,
                data.c10.clone(),
                DVector::zeros(ny),
                data.z_center(),
            );
            Ok(PsdOutcome {
                classification: class,
                set: SolutionSet::not_attained(n, 0.0, Some(path)),
                projected_report: None,
            })
        }
        PsdCase::ProjectedImperfect => {
            let reduced = class.projected.clone().expect("projected case carries its problem");
            let report = delegate(&reduced)?;
            let mut set = report.solution.embed(n, 0);
            set.base.rows_mut(r + ny, data.s0).copy_from(&data.z_center());
            if ny > 0 {
                set.blocks.push(SetBlock::AffineFree {
                    basis: embed_block(n, r, ny),
                });
            }
            Ok(PsdOutcome {
                classification: class,
                set,
                projected_report: Some(Box::new(report)),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn fiber(gamma0: &[f64], center: &[f64], lin: &[f64], level: f64) -> Fiber {
        Fiber {
            gamma0: gamma0.to_vec(),
            center: DVector::from_row_slice(center),
            lin: DVector::from_row_slice(lin),
            level,
        }
    }

    #[test]
    fn fiber_kinds() {
        assert_eq!(fiber(&[1.0], &[0.5], &[], 0.0).kind(), FiberKind::SinglePoint);
        assert_eq!(fiber(&[1.0], &[0.5], &[], 2.0).kind(), FiberKind::QuadricSlice);
        assert_eq!(fiber(&[1.0, -1.0], &[0.0, 0.0], &[], 0.0).kind(), FiberKind::QuadricSlice);
        assert_eq!(fiber(&[], &[], &[1.0], 2.0).kind(), FiberKind::UnionOverLinear);
        assert_eq!(fiber(&[], &[], &[0.0], 0.0).kind(), FiberKind::FullSpace);
    }

    #[test]
    fn fiber_samples_satisfy_relation() {
        let cases = [
            fiber(&[1.0], &[0.5], &[], 0.0),
            fiber(&[2.0, 0.5], &[0.5, -1.0], &[], 3.0),
            fiber(&[-2.0, 0.5], &[0.5, -1.0], &[], -3.0),
            fiber(&[-2.0, 0.5], &[0.5, -1.0], &[], 3.0),
            fiber(&[1.0, -1.0], &[0.0, 0.0], &[0.0], 0.0),
            fiber(&[1.0, -1.0], &[0.0, 0.0], &[1.0, -2.0], 1.5),
            fiber(&[], &[], &[1.0], 2.0),
            fiber(&[-1.0], &[3.0], &[], -4.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in &cases {
            let rep = f.representative();
            assert!(f.relation(&rep).abs() < 1e-12, "{f:?}");
            for _ in 0..50 {
                let v = f.sample(&mut rng, 1.0);
                let scale = 1.0 + v.norm_squared();
                assert!(f.relation(&v).abs() < 1e-12 * scale, "{f:?} {v}");
            }
        }
    }

    #[test]
    fn sublevel_samples_stay_inside() {
        let f = SublevelFiber {
            b00: SymMatrix::from_diagonal(&[-1.0]),
            b0: DVector::zeros(1),
            k: -1.0,
            point: DVector::from_vec(vec![2.0]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = f.sample(&mut rng, 1.0);
            assert!(f.value(&x) <= 0.0);
        }
    }
}
