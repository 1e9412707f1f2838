//! Solution sets, described intensionally and materialized by sampling.
//!
//! A set is `base + Σ blocks`, where each block contributes an independent
//! displacement: a sign choice, a point on a sphere, a free affine
//! direction, or a point on a fibre. Blocks are kept in whatever coordinates
//! the set currently lives in, and [`SolutionSet::pull_back`] maps them
//! through an affine change of variables.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::SolveError;
use crate::psd::{Fiber, SublevelFiber};
use crate::transforms::{AffineMap, TransformChain};

/// One factor of a solution set, as a displacement added to the base point.
#[derive(Debug, Clone, PartialEq)]
pub enum SetBlock {
    /// `± magnitude · axis`
    SignPair { axis: DVector<f64>, magnitude: f64 },
    /// `radius · basis · u` for unit `u`. The basis is orthonormal where the
    /// block was created; after a non-orthogonal pull-back it need not be.
    Sphere { basis: DMatrix<f64>, radius: f64 },
    /// `basis · v` for arbitrary `v`.
    AffineFree { basis: DMatrix<f64> },
    /// `embed · v` for `v` on an equality fibre.
    Fiber { fiber: Fiber, embed: DMatrix<f64> },
    /// `embed · v` for `v` in a sublevel set.
    Sublevel { fiber: SublevelFiber, embed: DMatrix<f64> },
}

impl SetBlock {
    fn representative(&self) -> DVector<f64> {
        match self {
            SetBlock::SignPair { axis, magnitude } => axis * *magnitude,
            SetBlock::Sphere { basis, radius } => basis.column(0) * *radius,
            SetBlock::AffineFree { basis } => DVector::zeros(basis.nrows()),
            SetBlock::Fiber { fiber, embed } => embed * fiber.representative(),
            SetBlock::Sublevel { fiber, embed } => embed * fiber.representative(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, spread: f64) -> DVector<f64> {
        match self {
            SetBlock::SignPair { axis, magnitude } => {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                axis * (s * magnitude)
            }
            SetBlock::Sphere { basis, radius } => {
                let u = unit_vector(rng, basis.ncols());
                basis * u * *radius
            }
            SetBlock::AffineFree { basis } => {
                let v = gaussian(rng, basis.ncols()) * spread;
                basis * v
            }
            SetBlock::Fiber { fiber, embed } => embed * fiber.sample(rng, spread),
            SetBlock::Sublevel { fiber, embed } => embed * fiber.sample(rng, spread),
        }
    }

    fn map_linear(&self, t: &DMatrix<f64>) -> SetBlock {
        match self {
            SetBlock::SignPair { axis, magnitude } => SetBlock::SignPair {
                axis: t * axis,
                magnitude: *magnitude,
            },
            SetBlock::Sphere { basis, radius } => SetBlock::Sphere {
                basis: t * basis,
                radius: *radius,
            },
            SetBlock::AffineFree { basis } => SetBlock::AffineFree { basis: t * basis },
            SetBlock::Fiber { fiber, embed } => SetBlock::Fiber {
                fiber: fiber.clone(),
                embed: t * embed,
            },
            SetBlock::Sublevel { fiber, embed } => SetBlock::Sublevel {
                fiber: fiber.clone(),
                embed: t * embed,
            },
        }
    }

    fn embed_rows(&self, n: usize, start: usize) -> SetBlock {
        let lift = |m: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(n, m.ncols());
            out.view_mut((start, 0), (m.nrows(), m.ncols())).copy_from(m);
            out
        };
        match self {
            SetBlock::SignPair { axis, magnitude } => {
                let mut a = DVector::zeros(n);
                a.rows_mut(start, axis.len()).copy_from(axis);
                SetBlock::SignPair {
                    axis: a,
                    magnitude: *magnitude,
                }
            }
            SetBlock::Sphere { basis, radius } => SetBlock::Sphere {
                basis: lift(basis),
                radius: *radius,
            },
            SetBlock::AffineFree { basis } => SetBlock::AffineFree { basis: lift(basis) },
            SetBlock::Fiber { fiber, embed } => SetBlock::Fiber {
                fiber: fiber.clone(),
                embed: lift(embed),
            },
            SetBlock::Sublevel { fiber, embed } => SetBlock::Sublevel {
                fiber: fiber.clone(),
                embed: lift(embed),
            },
        }
    }

    /// Number of points contributed, `None` when uncountable.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            SetBlock::SignPair { magnitude, .. } => Some(if *magnitude == 0.0 { 1 } else { 2 }),
            SetBlock::Sphere { radius, basis } => {
                if *radius == 0.0 {
                    Some(1)
                } else if basis.ncols() == 1 {
                    Some(2)
                } else {
                    None
                }
            }
            SetBlock::AffineFree { basis } => (basis.ncols() == 0).then_some(1),
            SetBlock::Fiber { fiber, .. } => fiber.is_single_point().then_some(1),
            SetBlock::Sublevel { .. } => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SetBlock::SignPair { .. } => "sign-pair",
            SetBlock::Sphere { .. } => "sphere",
            SetBlock::AffineFree { .. } => "affine-free",
            SetBlock::Fiber { .. } => "fiber",
            SetBlock::Sublevel { .. } => "sublevel",
        }
    }
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub(crate) fn unit_vector(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    loop {
        let v = gaussian(rng, m);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Feasible points approaching an infimum that is not attained.
///
/// In the coordinates where it was built the path is
/// `x(τ) = (τ v, y0(τ), c)` with `y0(τ)` chosen on the line spanned by
/// `C10' x1 + c0` so that the constraint holds exactly, and the loss is
/// `τ² |v|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachPath {
    pub(crate) direction: DVector<f64>,
    pub(crate) b11: DMatrix<f64>,
    pub(crate) b1: DVector<f64>,
    pub(crate) k1: f64,
    pub(crate) c10: DMatrix<f64>,
    pub(crate) c0: DVector<f64>,
    pub(crate) z_center: DVector<f64>,
    linear: DMatrix<f64>,
    shift: DVector<f64>,
}

impl ApproachPath {
    pub(crate) fn new(
        direction: DVector<f64>,
        b11: DMatrix<f64>,
        b1: DVector<f64>,
        k1: f64,
        c10: DMatrix<f64>,
        c0: DVector<f64>,
        z_center: DVector<f64>,
    ) -> Self {
        let n = direction.len() + c0.len() + z_center.len();
        Self {
            direction,
            b11,
            b1,
            k1,
            c10,
            c0,
            z_center,
            linear: DMatrix::identity(n, n),
            shift: DVector::zeros(n),
        }
    }

    /// Point on the path at parameter `τ != 0`.
    pub fn point(&self, tau: f64) -> DVector<f64> {
        let r = self.direction.len();
        let ny = self.c0.len();
        let x1 = &self.direction * tau;
        let lin = self.c10.transpose() * &x1 + &self.c0;
        let q1 = (&x1.transpose() * &self.b11 * &x1)[(0, 0)] + 2.0 * self.b1.dot(&x1) - self.k1;
        let y0 = &lin * (-q1 / (2.0 * lin.norm_squared()));
        let mut x = DVector::zeros(r + ny + self.z_center.len());
        x.rows_mut(0, r).copy_from(&x1);
        x.rows_mut(r, ny).copy_from(&y0);
        x.rows_mut(r + ny, self.z_center.len()).copy_from(&self.z_center);
        &self.linear * x + &self.shift
    }

    /// Loss at parameter `τ`.
    pub fn loss(&self, tau: f64) -> f64 {
        tau * tau * self.direction.norm_squared()
    }

    /// `count` feasible points with loss at most `eta`, decreasing toward 0.
    pub fn points_below(&self, eta: f64, count: usize) -> Vec<DVector<f64>> {
        let tau0 = eta.sqrt() / self.direction.norm();
        (0..count).map(|j| self.point(tau0 / (j as f64 + 1.0))).collect()
    }

    fn pulled_back(&self, g: &AffineMap) -> Self {
        let mut out = self.clone();
        out.linear = g.linear() * &self.linear;
        out.shift = g.linear() * &self.shift + g.shift();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    /// Infimum of the loss, attained or not.
    pub infimum: f64,
    pub attained: bool,
    pub base: DVector<f64>,
    pub blocks: Vec<SetBlock>,
    /// Present when the infimum is approached but not attained.
    pub approach: Option<ApproachPath>,
}

impl SolutionSet {
    pub fn point(x: DVector<f64>, infimum: f64) -> Self {
        Self {
            infimum,
            attained: true,
            base: x,
            blocks: Vec::new(),
            approach: None,
        }
    }

    pub fn with_blocks(base: DVector<f64>, blocks: Vec<SetBlock>, infimum: f64) -> Self {
        Self {
            infimum,
            attained: true,
            base,
            blocks,
            approach: None,
        }
    }

    /// Empty set with a known infimum.
    pub fn not_attained(n: usize, infimum: f64, approach: Option<ApproachPath>) -> Self {
        Self {
            infimum,
            attained: false,
            base: DVector::zeros(n),
            blocks: Vec::new(),
            approach,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn representative(&self) -> Option<DVector<f64>> {
        if !self.attained {
            return None;
        }
        Some(
            self.blocks
                .iter()
                .fold(self.base.clone(), |acc, b| acc + b.representative()),
        )
    }

    /// Number of solutions, `None` when uncountable. Zero when not attained.
    pub fn cardinality(&self) -> Option<usize> {
        if !self.attained {
            return Some(0);
        }
        self.blocks
            .iter()
            .try_fold(1usize, |acc, b| b.cardinality().map(|c| acc * c))
    }

    /// Short description of the set's shape.
    pub fn kind(&self) -> String {
        match self.cardinality() {
            Some(0) => "empty".into(),
            Some(1) => "point".into(),
            Some(c) => format!("finite({c})"),
            None => {
                let labels: Vec<&str> = self.blocks.iter().map(|b| b.label()).collect();
                format!("continuum[{}]", labels.join(","))
            }
        }
    }

    /// Every solution when the set is finite (sign choices expanded).
    pub fn finite_points(&self) -> Option<Vec<DVector<f64>>> {
        if !self.attained {
            return Some(Vec::new());
        }
        self.cardinality()?;
        let mut pts = vec![self.base.clone()];
        for b in &self.blocks {
            let choices: Vec<DVector<f64>> = match b {
                SetBlock::SignPair { axis, magnitude } if *magnitude != 0.0 => {
                    vec![axis * *magnitude, axis * -*magnitude]
                }
                SetBlock::Sphere { basis, radius } if *radius != 0.0 => {
                    vec![basis.column(0) * *radius, basis.column(0) * -*radius]
                }
                other => vec![other.representative()],
            };
            pts = pts
                .iter()
                .flat_map(|p| choices.iter().map(move |c| p + c))
                .collect();
        }
        Some(pts)
    }

    /// `count` points of the set, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64, spread: f64) -> Result<Vec<DVector<f64>>, SolveError> {
        if !self.attained {
            return Err(SolveError::NotAttained);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| {
                self.blocks
                    .iter()
                    .fold(self.base.clone(), |acc, b| acc + b.sample(&mut rng, spread))
            })
            .collect())
    }

    /// The same set expressed through `x = T x_g + a`.
    pub fn pull_back(&self, g: &AffineMap) -> SolutionSet {
        let t = g.linear();
        SolutionSet {
            infimum: self.infimum,
            attained: self.attained,
            base: g.backward(&self.base),
            blocks: self.blocks.iter().map(|b| b.map_linear(t)).collect(),
            approach: self.approach.as_ref().map(|a| a.pulled_back(g)),
        }
    }

    /// Pull back through every map of a chain, last map first.
    pub fn pull_back_chain(&self, chain: &TransformChain) -> SolutionSet {
        chain
            .maps()
            .iter()
            .rev()
            .fold(self.clone(), |acc, g| acc.pull_back(g))
    }

    /// Places this set in coordinates `start..start+dim` of `R^n`, zero elsewhere.
    pub fn embed(&self, n: usize, start: usize) -> SolutionSet {
        let mut base = DVector::zeros(n);
        base.rows_mut(start, self.dim()).copy_from(&self.base);
        SolutionSet {
            infimum: self.infimum,
            attained: self.attained,
            base,
            blocks: self.blocks.iter().map(|b| b.embed_rows(n, start)).collect(),
            approach: None,
        }
    }
}
