/// Tolerances and sampler defaults shared by every stage of a solve.
///
/// All tolerances are relative: they are multiplied by `max(1, magnitude)` of
/// whatever quantity is being tested.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Eigenvalues with `|λ| <= tol_rank * scale` count as zero.
    pub tol_rank: f64,
    /// Neighbouring eigenvalues closer than this (relative) share a cluster.
    pub tol_cluster: f64,
    /// Zero test for classification quantities (`δ`, `ε`, `k*`, `k1`, `c0`, ...).
    pub tol_class: f64,
    /// Feasibility band for reported solutions.
    pub tol_feas: f64,
    /// Root acceptance for the secular equation, scaled by `1 + |k*|`.
    pub tol_secular: f64,
    /// Relative bracket width at which bisection stops.
    pub tol_lambda: f64,
    /// Initial pole offset is `pole_guard * |1/γ| + 1e-12`.
    pub pole_guard: f64,
    /// Largest accepted condition estimate of a coordinate transform.
    pub max_condition: f64,
    /// Standard deviation used when sampling unbounded directions.
    pub free_spread: f64,
    pub default_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_rank: 1e-9,
            tol_cluster: 1e-9,
            tol_class: 1e-9,
            tol_feas: 1e-8,
            tol_secular: 1e-10,
            tol_lambda: 1e-13,
            pole_guard: 1e-3,
            max_condition: 1e12,
            free_spread: 1.0,
            default_samples: 5,
        }
    }
}

impl SolverConfig {
    /// Returns the name of the first non-positive (or non-finite) field.
    pub fn invalid_field(&self) -> Option<&'static str> {
        let fields = [
            ("tol_rank", self.tol_rank),
            ("tol_cluster", self.tol_cluster),
            ("tol_class", self.tol_class),
            ("tol_feas", self.tol_feas),
            ("tol_secular", self.tol_secular),
            ("tol_lambda", self.tol_lambda),
            ("pole_guard", self.pole_guard),
            ("max_condition", self.max_condition),
            ("free_spread", self.free_spread),
        ];
        fields
            .iter()
            .find(|(_, v)| !(v.is_finite() && *v > 0.0))
            .map(|(name, _)| *name)
    }
}
