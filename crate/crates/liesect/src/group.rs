//! Coordinatized local Lie groups and fibrations.
//!
//! A [`GroupChart`] is a group germ written in one fixed coordinate chart:
//! a dimension, identity coordinates, a product rule and a trust radius
//! around the identity. A [`FibrationChart`] is the projection onto the
//! base together with the base point `x0 = p(e)`. Everything downstream
//! (brackets, section solvers, verifiers) consumes groups only through
//! `mu` and its differentials, so built-in closed forms and user
//! expressions behave identically.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{evaluate, evaluate_dual, Bindings, EvalError, ExprAst, VarKind};
use crate::numeric::{self, NewtonFailure};

/// Singular-value threshold for every rank decision (fibration submersion,
/// frame independence, transversality).
pub const RANK_TOL: f64 = 1e-9;
/// Newton parameters for chart sanity checks; near-identity inversion is
/// well conditioned, so no damping.
pub const INVERSE_NEWTON_TOL: f64 = 1e-12;
pub const INVERSE_MAX_ITER: usize = 50;
/// Step for first-derivative finite differences where no dual value is
/// available.
pub const FD_JACOBIAN_STEP: f64 = 1e-6;

pub const DEFAULT_DOMAIN_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("expected {expected} component expressions, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("component {component} uses `{var}`, which is not a valid variable here")]
    WrongVariableKind { component: usize, var: String },
    #[error("component {component} uses `{var}` but the chart dimension is {n}")]
    IndexOutOfRange {
        component: usize,
        var: String,
        n: usize,
    },
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("domain radius must be positive, got {0}")]
    BadDomainRadius(f64),
    #[error("projection index {index} out of range 1..={n}")]
    ProjectionIndex { index: usize, n: usize },
    #[error(
        "fibration is rank deficient at the identity: smallest singular value {smin:.3e} <= {tol:.0e}"
    )]
    RankDeficient { smin: f64, tol: f64 },
    #[error(
        "Newton inversion did not converge after {iterations} iterations (residual {residual:.3e}); the point may be too far from the identity"
    )]
    InverseDiverged { iterations: usize, residual: f64 },
    #[error("singular Jacobian while inverting; the point may be outside the chart")]
    InverseSingular,
}

/// How the product is computed.
#[derive(Debug, Clone)]
pub enum ProductRule {
    /// `(a, x) * (b, y) = (a b, x + y)` on positive-first-coordinate pairs.
    AbelianExp,
    /// `(M, X) * (N, Y) = (M N, X + M Y)` for lower-triangular 2x2 `M`
    /// stored as `(t11, t21, t22)` followed by the translation `(x1, x2)`.
    TriangularAffine,
    /// One expression per output coordinate over `g1..gn`, `h1..hn`.
    Custom(Vec<ExprAst>),
}

#[derive(Debug, Clone)]
pub struct GroupChart {
    n: usize,
    identity: Vec<f64>,
    rule: ProductRule,
    domain_radius: f64,
}

impl GroupChart {
    /// The direct product of the positive reals with the line; the Cauchy
    /// exponential equation lives here.
    pub fn abelian_exp() -> Self {
        GroupChart {
            n: 2,
            identity: vec![1.0, 0.0],
            rule: ProductRule::AbelianExp,
            domain_radius: DEFAULT_DOMAIN_RADIUS,
        }
    }

    /// Lower-triangular 2x2 matrices acting affinely on the plane.
    pub fn triangular_affine() -> Self {
        GroupChart {
            n: 5,
            identity: vec![1.0, 0.0, 1.0, 0.0, 0.0],
            rule: ProductRule::TriangularAffine,
            domain_radius: DEFAULT_DOMAIN_RADIUS,
        }
    }

    /// A chart defined by one product expression per coordinate.
    pub fn custom(
        identity: Vec<f64>,
        components: Vec<ExprAst>,
        domain_radius: f64,
    ) -> Result<Self, GroupError> {
        let n = identity.len();
        if components.len() != n {
            return Err(GroupError::ComponentCount {
                expected: n,
                got: components.len(),
            });
        }
        if !identity.iter().all(|c| c.is_finite()) {
            return Err(GroupError::NonFinite);
        }
        let radius_ok = domain_radius > 0.0 && domain_radius.is_finite();
        if !radius_ok {
            return Err(GroupError::BadDomainRadius(domain_radius));
        }
        for (i, component) in components.iter().enumerate() {
            check_vars(component, i, n, &[VarKind::G, VarKind::H])?;
        }
        Ok(GroupChart {
            n,
            identity,
            rule: ProductRule::Custom(components),
            domain_radius,
        })
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Self {
        self.domain_radius = radius;
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn identity(&self) -> &[f64] {
        &self.identity
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn rule(&self) -> &ProductRule {
        &self.rule
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), GroupError> {
        if v.len() == self.n {
            Ok(())
        } else {
            Err(GroupError::Dimension {
                expected: self.n,
                got: v.len(),
            })
        }
    }

    /// Trust-region membership: within `domain_radius` of the identity in
    /// the sup norm. Advisory; operations outside may still evaluate.
    pub fn in_domain(&self, g: &[f64]) -> bool {
        g.len() == self.n
            && g.iter()
                .zip(&self.identity)
                .all(|(a, b)| (a - b).abs() <= self.domain_radius)
    }

    /// Hard chart validity: finite coordinates, and for the builtins the
    /// positivity their coordinates assume.
    pub fn chart_valid(&self, g: &[f64]) -> bool {
        if g.len() != self.n || !g.iter().all(|c| c.is_finite()) {
            return false;
        }
        match self.rule {
            ProductRule::AbelianExp => g[0] > 0.0,
            ProductRule::TriangularAffine => g[0] > 0.0 && g[2] > 0.0,
            ProductRule::Custom(_) => true,
        }
    }

    /// The group product in chart coordinates.
    pub fn mu(&self, g: &[f64], h: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_dim(g)?;
        self.check_dim(h)?;
        match &self.rule {
            ProductRule::AbelianExp => Ok(vec![g[0] * h[0], g[1] + h[1]]),
            ProductRule::TriangularAffine => Ok(triangular_mu(g, h)),
            ProductRule::Custom(components) => {
                let bindings = Bindings::for_product(g, h);
                components
                    .iter()
                    .map(|c| evaluate(c, &bindings).map_err(Into::into))
                    .collect()
            }
        }
    }

    /// Directional derivative of `h -> mu(g, h)` at `h = e` along `v`:
    /// the tangent map of left multiplication by `g` applied to `v`.
    pub fn d2mu_apply(&self, g: &[f64], v: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_dim(g)?;
        self.check_dim(v)?;
        match &self.rule {
            ProductRule::AbelianExp => Ok(vec![g[0] * v[0], v[1]]),
            ProductRule::TriangularAffine => {
                let (m11, m21, m22) = (g[0], g[1], g[2]);
                let (b11, b21, b22, v1, v2) = (v[0], v[1], v[2], v[3], v[4]);
                // (B, w) -> (M B, M w)
                Ok(vec![
                    m11 * b11,
                    m21 * b11 + m22 * b21,
                    m22 * b22,
                    m11 * v1,
                    m21 * v1 + m22 * v2,
                ])
            }
            ProductRule::Custom(components) => {
                let bindings = Bindings::for_product(g, &self.identity);
                let seed = Bindings {
                    g: &[],
                    h: v,
                    x: &[],
                };
                components
                    .iter()
                    .map(|c| {
                        evaluate_dual(c, &bindings, &seed)
                            .map(|d| d.deriv)
                            .map_err(Into::into)
                    })
                    .collect()
            }
        }
    }

    /// Matrix of [`Self::d2mu_apply`]: column `j` is the derivative along
    /// the `j`-th coordinate direction.
    pub fn d2mu_at(&self, g: &[f64]) -> Result<DMatrix<f64>, GroupError> {
        let mut unit = vec![0.0; self.n];
        let mut cols = Vec::with_capacity(self.n);
        for j in 0..self.n {
            unit[j] = 1.0;
            cols.push(DVector::from_vec(self.d2mu_apply(g, &unit)?));
            unit[j] = 0.0;
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// Group inverse by Newton iteration on `z -> mu(g, z) - e` from `e`.
    pub fn inverse(&self, g: &[f64]) -> Result<Vec<f64>, GroupError> {
        self.check_dim(g)?;
        let f = |z: &[f64]| -> Result<Vec<f64>, GroupError> {
            let mut w = self.mu(g, z)?;
            for (wi, ei) in w.iter_mut().zip(&self.identity) {
                *wi -= ei;
            }
            Ok(w)
        };
        newton_root_mapped(f, &self.identity, INVERSE_NEWTON_TOL, INVERSE_MAX_ITER)
    }
}

fn newton_root_mapped(
    f: impl FnMut(&[f64]) -> Result<Vec<f64>, GroupError>,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, GroupError> {
    numeric::newton_root(f, start, tol, max_iter, FD_JACOBIAN_STEP).map_err(|e| match e {
        NewtonFailure::Inner(inner) => inner,
        NewtonFailure::DidNotConverge {
            iterations,
            residual,
        } => GroupError::InverseDiverged {
            iterations,
            residual,
        },
        NewtonFailure::SingularJacobian => GroupError::InverseSingular,
    })
}

fn triangular_mu(g: &[f64], h: &[f64]) -> Vec<f64> {
    let (m11, m21, m22, x1, x2) = (g[0], g[1], g[2], g[3], g[4]);
    let (n11, n21, n22, y1, y2) = (h[0], h[1], h[2], h[3], h[4]);
    vec![
        m11 * n11,
        m21 * n11 + m22 * n21,
        m22 * n22,
        x1 + m11 * y1,
        x2 + m21 * y1 + m22 * y2,
    ]
}

fn check_vars(
    expr: &ExprAst,
    component: usize,
    n: usize,
    allowed: &[VarKind],
) -> Result<(), GroupError> {
    let mut bad: Option<GroupError> = None;
    expr.visit_vars(&mut |v| {
        if bad.is_some() {
            return;
        }
        if !allowed.contains(&v.kind) {
            bad = Some(GroupError::WrongVariableKind {
                component,
                var: v.to_string(),
            });
        } else if v.index >= n {
            bad = Some(GroupError::IndexOutOfRange {
                component,
                var: v.to_string(),
                n,
            });
        }
    });
    match bad {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

/// How the base projection is computed.
#[derive(Debug, Clone)]
pub enum ProjectionRule {
    /// Select these coordinate positions (zero-based).
    Indices(Vec<usize>),
    /// One expression per base coordinate over `x1..xn`.
    Exprs(Vec<ExprAst>),
}

#[derive(Debug, Clone)]
pub struct FibrationChart {
    m: usize,
    rule: ProjectionRule,
    x0: Vec<f64>,
}

impl FibrationChart {
    /// Coordinate projection onto the listed positions (zero-based).
    pub fn from_indices(group: &GroupChart, indices: &[usize]) -> Result<Self, GroupError> {
        for &index in indices {
            if index >= group.dim() {
                return Err(GroupError::ProjectionIndex {
                    index: index + 1,
                    n: group.dim(),
                });
            }
        }
        Self::validate(group, ProjectionRule::Indices(indices.to_vec()), indices.len())
    }

    /// Projection given by expressions over `x1..xn`.
    pub fn from_exprs(group: &GroupChart, exprs: Vec<ExprAst>) -> Result<Self, GroupError> {
        for (i, expr) in exprs.iter().enumerate() {
            check_vars(expr, i, group.dim(), &[VarKind::X])?;
        }
        let m = exprs.len();
        Self::validate(group, ProjectionRule::Exprs(exprs), m)
    }

    fn validate(group: &GroupChart, rule: ProjectionRule, m: usize) -> Result<Self, GroupError> {
        let mut chart = FibrationChart {
            m,
            rule,
            x0: Vec::new(),
        };
        chart.x0 = chart.project(group.identity())?;
        let jac = chart.dp(group, group.identity())?;
        let smin = numeric::min_singular_value(&jac);
        let submersion = smin > RANK_TOL;
        if !submersion {
            return Err(GroupError::RankDeficient {
                smin,
                tol: RANK_TOL,
            });
        }
        Ok(chart)
    }

    pub fn base_dim(&self) -> usize {
        self.m
    }

    /// `x0 = p(e)`.
    pub fn base_point(&self) -> &[f64] {
        &self.x0
    }

    pub fn rule(&self) -> &ProjectionRule {
        &self.rule
    }

    /// Apply the projection.
    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>, GroupError> {
        match &self.rule {
            ProjectionRule::Indices(indices) => Ok(indices.iter().map(|&i| g[i]).collect()),
            ProjectionRule::Exprs(exprs) => {
                let bindings = Bindings::for_point(g);
                exprs
                    .iter()
                    .map(|e| evaluate(e, &bindings).map_err(Into::into))
                    .collect()
            }
        }
    }

    /// Directional derivative of the projection at `g` along `v`.
    pub fn dp_apply(&self, g: &[f64], v: &[f64]) -> Result<Vec<f64>, GroupError> {
        match &self.rule {
            ProjectionRule::Indices(indices) => Ok(indices.iter().map(|&i| v[i]).collect()),
            ProjectionRule::Exprs(exprs) => {
                let bindings = Bindings::for_point(g);
                let seed = Bindings {
                    g: &[],
                    h: &[],
                    x: v,
                };
                exprs
                    .iter()
                    .map(|e| {
                        evaluate_dual(e, &bindings, &seed)
                            .map(|d| d.deriv)
                            .map_err(Into::into)
                    })
                    .collect()
            }
        }
    }

    /// Jacobian of the projection at `g`; constant 0/1 rows for index
    /// projections.
    pub fn dp(&self, group: &GroupChart, g: &[f64]) -> Result<DMatrix<f64>, GroupError> {
        let n = group.dim();
        let mut unit = vec![0.0; n];
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            unit[j] = 1.0;
            cols.push(DVector::from_vec(self.dp_apply(g, &unit)?));
            unit[j] = 0.0;
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// Orthonormal basis of the vertical subspace, the null space of
    /// `Dp(e)`.
    pub fn vertical_subspace(&self, group: &GroupChart) -> Result<DMatrix<f64>, GroupError> {
        let jac = self.dp(group, group.identity())?;
        let smin = numeric::min_singular_value(&jac);
        let submersion = smin > RANK_TOL;
        if !submersion {
            return Err(GroupError::RankDeficient {
                smin,
                tol: RANK_TOL,
            });
        }
        Ok(numeric::null_space(&jac))
    }
}

/// A tangent vector pinned to a base point; the dimension travels with the
/// tuple, so base-space and group-space tangents use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base_point: Vec<f64>,
    components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base_point: Vec<f64>, components: Vec<f64>) -> Result<Self, GroupError> {
        if base_point.len() != components.len() {
            return Err(GroupError::Dimension {
                expected: base_point.len(),
                got: components.len(),
            });
        }
        if !base_point.iter().chain(&components).all(|c| c.is_finite()) {
            return Err(GroupError::NonFinite);
        }
        Ok(TangentVector {
            base_point,
            components,
        })
    }

    pub fn at_identity(group: &GroupChart, components: Vec<f64>) -> Result<Self, GroupError> {
        if components.len() != group.dim() {
            return Err(GroupError::Dimension {
                expected: group.dim(),
                got: components.len(),
            });
        }
        Self::new(group.identity().to_vec(), components)
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }
}

/// The abelian builtin with its projection onto the second coordinate.
pub fn builtin_abelian_exp() -> (GroupChart, FibrationChart) {
    let group = GroupChart::abelian_exp();
    let fibration = FibrationChart::from_indices(&group, &[1]).expect("builtin fibration");
    (group, fibration)
}

/// The triangular-affine builtin with its projection onto the translation
/// part.
pub fn builtin_triangular_affine() -> (GroupChart, FibrationChart) {
    let group = GroupChart::triangular_affine();
    let fibration = FibrationChart::from_indices(&group, &[3, 4]).expect("builtin fibration");
    (group, fibration)
}
