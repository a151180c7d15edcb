//! Bounded-variable linear programming.
//!
//! Trajectory generation produces long, extremely sparse problems whose
//! constraints are almost entirely simple bounds on individual variables;
//! what remain as genuine rows are the per-step dynamics couplings and the
//! vertical ordering between neighbouring arms. The solver is a two-phase
//! revised simplex specialized for that shape: every variable lives
//! between (possibly infinite) bounds, slack and artificial columns are
//! appended internally, and an explicit basis inverse is maintained and
//! refactorized periodically for accuracy.

mod simplex;

/// Handle to a variable of a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(usize);

impl VarId {
    /// Position of the variable in [`Solution::values`].
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub(crate) relation: Relation,
    pub(crate) rhs: f64,
    /// Sorted by variable index, one entry per variable, no zeros.
    pub(crate) terms: Vec<(usize, f64)>,
}

/// A minimization problem: `min c·x` subject to `l ≤ x ≤ u` and the added
/// rows. Build incrementally, then call [`solve`](Self::solve).
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) cost: Vec<f64>,
    pub(crate) rows: Vec<Row>,
}

/// An optimal assignment: structural variable values (indexed by
/// [`VarId::index`]) and the objective they attain.
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl std::ops::Index<VarId> for Solution {
    type Output = f64;

    fn index(&self, var: VarId) -> &f64 {
        &self.values[var.0]
    }
}

/// How a solve ended, short of numerical failure.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("numerical failure in simplex: {0}")]
    Numerics(String),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable with bounds `[lower, upper]` (either may be
    /// infinite) and objective coefficient `cost`.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> VarId {
        assert!(!lower.is_nan() && !upper.is_nan() && cost.is_finite(), "bounds and cost must not be NaN");
        assert!(lower <= upper, "lower bound {lower} exceeds upper bound {upper}");
        assert!(lower < f64::INFINITY && upper > f64::NEG_INFINITY, "bounds pin the variable outside every finite value");
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        VarId(self.lower.len() - 1)
    }

    /// Replace a variable's bounds.
    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        assert!(!lower.is_nan() && !upper.is_nan(), "bounds must not be NaN");
        assert!(lower <= upper, "lower bound {lower} exceeds upper bound {upper}");
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    /// Pin a variable to a single value.
    pub fn fix_var(&mut self, var: VarId, value: f64) {
        assert!(value.is_finite(), "fixed value must be finite");
        self.set_bounds(var, value, value);
    }

    pub fn bounds(&self, var: VarId) -> (f64, f64) {
        (self.lower[var.0], self.upper[var.0])
    }

    /// Add the row `Σ coef·var  relation  rhs`. Repeated variables are
    /// merged; zero coefficients are dropped.
    pub fn add_row(&mut self, relation: Relation, rhs: f64, terms: &[(VarId, f64)]) {
        assert!(rhs.is_finite(), "row right-hand side must be finite");
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(var, coef) in terms {
            assert!(coef.is_finite(), "row coefficient must be finite");
            assert!(var.0 < self.lower.len(), "row references an unknown variable");
            merged.push((var.0, coef));
        }
        merged.sort_by_key(|&(j, _)| j);
        merged.dedup_by(|later, earlier| {
            if earlier.0 == later.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        merged.retain(|&(_, coef)| coef != 0.0);
        self.rows.push(Row { relation, rhs, terms: merged });
    }

    pub fn var_count(&self) -> usize {
        self.lower.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Minimize the objective over the feasible set.
    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        simplex::solve(self)
    }
}
