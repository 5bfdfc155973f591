//! Construction of the local section by two independent routes.
//!
//! The exponential route flows left-invariant vector fields from the
//! identity (canonical coordinates of the first kind) and inverts the
//! projection with Newton iteration. The differential route integrates the
//! field the differential equation forces on the section image, along a
//! path in the base. On a closed transversal frame the two must agree;
//! their agreement and the path independence of the second route are what
//! the verifier checks.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{self, AlgebraError, AlgebraFrame};
use crate::group::{FibrationChart, GroupChart, GroupError};
use crate::numeric::{self, NewtonFailure};

pub const DEFAULT_RK4_STEP: f64 = 1e-2;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_NEWTON_ITER: usize = 50;
/// Finite-difference step for the Newton Jacobian in section parameters.
pub const SECTION_FD_STEP: f64 = 1e-6;
/// Condition-number ceiling on the base-velocity system; beyond this the
/// frame has lost transversality along the path.
pub const SINGULARITY_COND_LIMIT: f64 = 1e12;
/// Blow-up guard for integrators, in multiples of the domain radius. The
/// domain radius itself is advisory; section evaluation routinely visits
/// points past it (derived products land outside the sampling region), so
/// the hard stop only catches genuine escapes.
const ESCAPE_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStrategy {
    /// One leg from the base point straight to the target.
    StraightLine,
    /// One leg per base axis, changing a single coordinate at a time.
    AxisLegs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverRoute {
    Exp,
    Ode,
}

impl std::fmt::Display for SolverRoute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverRoute::Exp => write!(f, "exp"),
            SolverRoute::Ode => write!(f, "ode"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub rk4_step: f64,
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    pub path_strategy: PathStrategy,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            rk4_step: DEFAULT_RK4_STEP,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_newton_iter: DEFAULT_MAX_NEWTON_ITER,
            path_strategy: PathStrategy::StraightLine,
        }
    }
}

impl SolverParams {
    pub fn validate(&self, group: &GroupChart) -> Result<(), SolveError> {
        let step_ok = self.rk4_step > 0.0 && self.rk4_step <= group.domain_radius();
        if !step_ok {
            return Err(SolveError::BadParams(format!(
                "rk4_step must be in (0, domain_radius = {}], got {}",
                group.domain_radius(),
                self.rk4_step
            )));
        }
        let tol_ok = self.newton_tol > 0.0;
        if !tol_ok {
            return Err(SolveError::BadParams(format!(
                "newton_tol must be positive, got {}",
                self.newton_tol
            )));
        }
        if self.max_newton_iter == 0 {
            return Err(SolveError::BadParams(
                "max_newton_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("invalid solver parameters: {0}")]
    BadParams(String),
    #[error("expected a base point of dimension {expected}, got {got}")]
    BaseDimension { expected: usize, got: usize },
    #[error("non-finite base point")]
    NonFinitePoint,
    #[error(
        "frame does not span a subalgebra (closure residual {residual:.3e}); the exponential route requires one"
    )]
    NotClosed { residual: f64 },
    #[error("frame is not transversal to the vertical subspace")]
    NotTransversal,
    #[error(
        "Newton did not converge after {iterations} iterations (residual {residual:.3e}); target may be outside the solvable neighborhood"
    )]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("singular Newton Jacobian: transversality lost at the target")]
    SingularNewtonJacobian,
    #[error(
        "transversality lost along the path at s = {s:.4} (condition number {cond:.3e})"
    )]
    TransversalityLost { s: f64, cond: f64 },
    #[error("integration escaped the chart (distance {distance:.3e} from identity, limit {limit:.3e})")]
    Escaped { distance: f64, limit: f64 },
}

fn escape_limit(group: &GroupChart) -> f64 {
    ESCAPE_FACTOR * group.domain_radius()
}

fn check_state(group: &GroupChart, state: &[f64]) -> Result<(), SolveError> {
    if !group.chart_valid(state) {
        return Err(SolveError::Escaped {
            distance: f64::INFINITY,
            limit: escape_limit(group),
        });
    }
    let distance = numeric::diff_inf_norm(state, group.identity());
    let limit = escape_limit(group);
    if distance > limit {
        return Err(SolveError::Escaped { distance, limit });
    }
    Ok(())
}

/// Classical fixed-step RK4 on a first-order system, with a per-step state
/// guard.
fn rk4_integrate<E>(
    state: &mut [f64],
    t0: f64,
    h: f64,
    steps: usize,
    mut rhs: impl FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    mut guard: impl FnMut(&[f64]) -> Result<(), E>,
) -> Result<(), E> {
    let n = state.len();
    let mut stage = vec![0.0; n];
    for step in 0..steps {
        let t = t0 + h * step as f64;
        let k1 = rhs(t, state)?;
        for i in 0..n {
            stage[i] = state[i] + 0.5 * h * k1[i];
        }
        let k2 = rhs(t + 0.5 * h, &stage)?;
        for i in 0..n {
            stage[i] = state[i] + 0.5 * h * k2[i];
        }
        let k3 = rhs(t + 0.5 * h, &stage)?;
        for i in 0..n {
            stage[i] = state[i] + h * k3[i];
        }
        let k4 = rhs(t + h, &stage)?;
        for i in 0..n {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        guard(state)?;
    }
    Ok(())
}

/// Flow of the left-invariant field of `x` from the identity over `[0, t]`:
/// integrate `gamma' = D2mu(gamma, e) x` with `ceil(|t| / rk4_step)` RK4
/// steps.
pub fn exp_left_invariant(
    group: &GroupChart,
    x: &[f64],
    t: f64,
    params: &SolverParams,
) -> Result<Vec<f64>, SolveError> {
    if x.len() != group.dim() {
        return Err(SolveError::BaseDimension {
            expected: group.dim(),
            got: x.len(),
        });
    }
    let mut state = group.identity().to_vec();
    if t == 0.0 {
        return Ok(state);
    }
    let steps = ((t.abs() / params.rk4_step).ceil() as usize).max(1);
    let h = t / steps as f64;
    rk4_integrate(
        &mut state,
        0.0,
        h,
        steps,
        |_, gamma| group.d2mu_apply(gamma, x).map_err(SolveError::from),
        |gamma| check_state(group, gamma),
    )?;
    Ok(state)
}

/// An evaluatable local section bound to a group and fibration.
pub trait Section: Send + Sync {
    fn group(&self) -> &GroupChart;
    fn fibration(&self) -> &FibrationChart;
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, SolveError>;

    /// The induced local product on the base: `p(mu(sigma(x), sigma(y)))`.
    fn derived_product(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, SolveError> {
        let sx = self.evaluate(x)?;
        let sy = self.evaluate(y)?;
        let product = self.group().mu(&sx, &sy)?;
        Ok(self.fibration().project(&product)?)
    }
}

/// A solver-built section: group, fibration, frame and parameters, plus an
/// evaluation cache. Evaluation is pure, so the cache only deduplicates
/// work; concurrent and sequential runs return identical coordinates.
#[derive(Debug)]
pub struct SectionField {
    group: Arc<GroupChart>,
    fibration: Arc<FibrationChart>,
    frame: AlgebraFrame,
    params: SolverParams,
    route: SolverRoute,
    /// `Dp(e) F`, the linearization used for Newton initial guesses.
    base_jacobian: DMatrix<f64>,
    cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
}

/// Section from exponentiating the frame's left-invariant fields and
/// inverting the projection. Requires a closed, transversal frame.
pub fn build_section_exp(
    group: impl Into<Arc<GroupChart>>,
    fibration: impl Into<Arc<FibrationChart>>,
    frame: AlgebraFrame,
    params: SolverParams,
) -> Result<SectionField, SolveError> {
    let group = group.into();
    let fibration = fibration.into();
    let closure = algebra::closure_check(&group, &frame, algebra::DEFAULT_CLOSURE_TOL)?;
    if !closure.is_subalgebra {
        return Err(SolveError::NotClosed {
            residual: closure.max_residual,
        });
    }
    build_section_checked(group, fibration, frame, params, SolverRoute::Exp)
}

/// Section from integrating the differential equation along base paths.
/// Needs transversality only; a non-closed frame shows up as path
/// dependence, which the verifier can observe.
pub fn build_section_ode(
    group: impl Into<Arc<GroupChart>>,
    fibration: impl Into<Arc<FibrationChart>>,
    frame: AlgebraFrame,
    params: SolverParams,
) -> Result<SectionField, SolveError> {
    build_section_checked(group.into(), fibration.into(), frame, params, SolverRoute::Ode)
}

/// Route-dispatching convenience for config-driven callers.
pub fn build_section(
    group: impl Into<Arc<GroupChart>>,
    fibration: impl Into<Arc<FibrationChart>>,
    frame: AlgebraFrame,
    params: SolverParams,
    route: SolverRoute,
) -> Result<SectionField, SolveError> {
    match route {
        SolverRoute::Exp => build_section_exp(group, fibration, frame, params),
        SolverRoute::Ode => build_section_ode(group, fibration, frame, params),
    }
}

fn build_section_checked(
    group: Arc<GroupChart>,
    fibration: Arc<FibrationChart>,
    frame: AlgebraFrame,
    params: SolverParams,
    route: SolverRoute,
) -> Result<SectionField, SolveError> {
    params.validate(&group)?;
    if frame.dim() != group.dim() {
        return Err(SolveError::BaseDimension {
            expected: group.dim(),
            got: frame.dim(),
        });
    }
    if frame.len() != fibration.base_dim() {
        return Err(SolveError::BaseDimension {
            expected: fibration.base_dim(),
            got: frame.len(),
        });
    }
    let transversality = algebra::transversality_check(&group, &fibration, &frame)?;
    if !transversality.is_transversal {
        return Err(SolveError::NotTransversal);
    }
    let dp_e = fibration.dp(&group, group.identity())?;
    let base_jacobian = &dp_e * frame.matrix();
    Ok(SectionField {
        group,
        fibration,
        frame,
        params,
        route,
        base_jacobian,
        cache: Mutex::new(HashMap::new()),
    })
}

impl SectionField {
    pub fn route(&self) -> SolverRoute {
        self.route
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn frame(&self) -> &AlgebraFrame {
        &self.frame
    }

    pub fn group_arc(&self) -> Arc<GroupChart> {
        Arc::clone(&self.group)
    }

    pub fn fibration_arc(&self) -> Arc<FibrationChart> {
        Arc::clone(&self.fibration)
    }

    fn check_target(&self, x: &[f64]) -> Result<(), SolveError> {
        if x.len() != self.fibration.base_dim() {
            return Err(SolveError::BaseDimension {
                expected: self.fibration.base_dim(),
                got: x.len(),
            });
        }
        if !x.iter().all(|c| c.is_finite()) {
            return Err(SolveError::NonFinitePoint);
        }
        Ok(())
    }

    /// The flow point `exp(sum_i t_i F_i)` before projection inversion.
    fn flow(&self, t: &[f64]) -> Result<Vec<f64>, SolveError> {
        let x = self.frame.combine(t);
        exp_left_invariant(&self.group, &x, 1.0, &self.params)
    }

    fn evaluate_exp(&self, x: &[f64]) -> Result<Vec<f64>, SolveError> {
        let x0 = self.fibration.base_point();
        let rhs = DVector::from_iterator(x.len(), x.iter().zip(x0).map(|(a, b)| a - b));
        let guess = self
            .base_jacobian
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(SolveError::NotTransversal)?;
        let objective = |t: &[f64]| -> Result<Vec<f64>, SolveError> {
            let gamma = self.flow(t)?;
            let projected = self.fibration.project(&gamma)?;
            Ok(projected
                .iter()
                .zip(x)
                .map(|(p, xi)| p - xi)
                .collect())
        };
        let t_star = numeric::newton_root(
            objective,
            guess.as_slice(),
            self.params.newton_tol,
            self.params.max_newton_iter,
            SECTION_FD_STEP,
        )
        .map_err(|failure| match failure {
            NewtonFailure::Inner(err) => err,
            NewtonFailure::DidNotConverge {
                iterations,
                residual,
            } => SolveError::NewtonDiverged {
                iterations,
                residual,
            },
            NewtonFailure::SingularJacobian => SolveError::SingularNewtonJacobian,
        })?;
        self.flow(&t_star)
    }

    fn evaluate_ode(&self, x: &[f64]) -> Result<Vec<f64>, SolveError> {
        let x0 = self.fibration.base_point().to_vec();
        if numeric::diff_inf_norm(x, &x0) == 0.0 {
            return Ok(self.group.identity().to_vec());
        }
        let legs: Vec<(Vec<f64>, Vec<f64>)> = match self.params.path_strategy {
            PathStrategy::StraightLine => vec![(x0.clone(), x.to_vec())],
            PathStrategy::AxisLegs => {
                let mut legs = Vec::new();
                let mut current = x0.clone();
                for axis in 0..x.len() {
                    let mut next = current.clone();
                    next[axis] = x[axis];
                    legs.push((current.clone(), next.clone()));
                    current = next;
                }
                legs
            }
        };
        let total_legs = legs.len() as f64;
        let mut state = self.group.identity().to_vec();
        for (leg_index, (from, to)) in legs.iter().enumerate() {
            let velocity: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
            let span = numeric::inf_norm(&velocity);
            if span == 0.0 {
                continue;
            }
            let steps = ((span / self.params.rk4_step).ceil() as usize).max(1);
            let h = 1.0 / steps as f64;
            let rhs = |s: f64, gamma: &[f64]| -> Result<Vec<f64>, SolveError> {
                self.section_velocity(gamma, &velocity)
                    .map_err(|err| match err {
                        SolveError::TransversalityLost { cond, .. } => {
                            SolveError::TransversalityLost {
                                s: (leg_index as f64 + s) / total_legs,
                                cond,
                            }
                        }
                        other => other,
                    })
            };
            rk4_integrate(&mut state, 0.0, h, steps, rhs, |gamma| {
                check_state(&self.group, gamma)
            })?;
        }
        Ok(state)
    }

    /// The field the differential equation forces: with `L = D2mu(gamma, e) F`,
    /// the section moves by `L (Dp(gamma) L)^{-1} x'`.
    fn section_velocity(&self, gamma: &[f64], base_velocity: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.group.dim();
        let m = self.frame.len();
        let mut translated = DMatrix::zeros(n, m);
        for j in 0..m {
            let column = self.group.d2mu_apply(gamma, &self.frame.column(j))?;
            for i in 0..n {
                translated[(i, j)] = column[i];
            }
        }
        let mut system = DMatrix::zeros(m, m);
        for j in 0..m {
            let col: Vec<f64> = translated.column(j).iter().copied().collect();
            let projected = self.fibration.dp_apply(gamma, &col)?;
            for i in 0..m {
                system[(i, j)] = projected[i];
            }
        }
        let svd = system.svd(true, true);
        let (smin, smax) = {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0_f64;
            for s in svd.singular_values.iter() {
                lo = lo.min(*s);
                hi = hi.max(*s);
            }
            (lo, hi)
        };
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let invertible = cond < SINGULARITY_COND_LIMIT;
        if !invertible {
            return Err(SolveError::TransversalityLost { s: 0.0, cond });
        }
        let rhs = DVector::from_column_slice(base_velocity);
        let weights = svd
            .solve(&rhs, 0.0)
            .map_err(|_| SolveError::TransversalityLost { s: 0.0, cond })?;
        let velocity = translated * weights;
        Ok(velocity.iter().copied().collect())
    }
}

impl Section for SectionField {
    fn group(&self) -> &GroupChart {
        &self.group
    }

    fn fibration(&self) -> &FibrationChart {
        &self.fibration
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, SolveError> {
        self.check_target(x)?;
        let key: Vec<u64> = x.iter().map(|c| c.to_bits()).collect();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let value = match self.route {
            SolverRoute::Exp => self.evaluate_exp(x),
            SolverRoute::Ode => self.evaluate_ode(x),
        }?;
        self.cache
            .lock()
            .unwrap()
            .insert(key, value.clone());
        Ok(value)
    }
}

type SectionFormula = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A section given in closed form; the reference oracles and injected
/// non-solutions used by the verifier are these.
pub struct ClosedFormSection {
    group: Arc<GroupChart>,
    fibration: Arc<FibrationChart>,
    formula: SectionFormula,
}

impl ClosedFormSection {
    pub fn new(
        group: impl Into<Arc<GroupChart>>,
        fibration: impl Into<Arc<FibrationChart>>,
        formula: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ClosedFormSection {
            group: group.into(),
            fibration: fibration.into(),
            formula: Box::new(formula),
        }
    }
}

impl Section for ClosedFormSection {
    fn group(&self) -> &GroupChart {
        &self.group
    }

    fn fibration(&self) -> &FibrationChart {
        &self.fibration
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, SolveError> {
        if x.len() != self.fibration.base_dim() {
            return Err(SolveError::BaseDimension {
                expected: self.fibration.base_dim(),
                got: x.len(),
            });
        }
        Ok((self.formula)(x))
    }
}

/// Closed-form sections used as oracles by demos and the verifier's
/// soundness checks.
pub mod reference {
    use super::*;
    use crate::group::{builtin_abelian_exp, builtin_triangular_affine};

    /// The exponential solution `sigma(x) = (e^{k x}, x)` of the Cauchy
    /// equation.
    pub fn exponential(k: f64) -> ClosedFormSection {
        let (group, fibration) = builtin_abelian_exp();
        ClosedFormSection::new(group, fibration, move |x: &[f64]| {
            vec![(k * x[0]).exp(), x[0]]
        })
    }

    /// The non-solution with first component `1 + x`; satisfies the
    /// identity condition but fails the functional equation.
    pub fn affine_nonsolution() -> ClosedFormSection {
        let (group, fibration) = builtin_abelian_exp();
        ClosedFormSection::new(group, fibration, |x: &[f64]| vec![1.0 + x[0], x[0]])
    }

    /// An exponential perturbed by `eps x^2`; close to a solution near the
    /// base point but detectably violating the differential equation.
    pub fn perturbed_exponential(k: f64, eps: f64) -> ClosedFormSection {
        let (group, fibration) = builtin_abelian_exp();
        ClosedFormSection::new(group, fibration, move |x: &[f64]| {
            vec![(k * x[0]).exp() + eps * x[0] * x[0], x[0]]
        })
    }

    /// The scalar-matrix solution `sigma(X) = ((1 + k X_1) I, X)` of the
    /// triangular functional equation, valid while `1 + k X_1 > 0`.
    pub fn triangular_scaled(k: f64) -> ClosedFormSection {
        let (group, fibration) = builtin_triangular_affine();
        ClosedFormSection::new(group, fibration, move |x: &[f64]| {
            let scale = 1.0 + k * x[0];
            vec![scale, 0.0, scale, x[0], x[1]]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{builtin_abelian_exp, builtin_triangular_affine};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn abelian_frame(k: f64) -> (Arc<GroupChart>, Arc<FibrationChart>, AlgebraFrame) {
        let (group, fibration) = builtin_abelian_exp();
        let frame = AlgebraFrame::new(&group, &[vec![k, 1.0]]).unwrap();
        (Arc::new(group), Arc::new(fibration), frame)
    }

    fn triangular_frame(k: f64) -> (Arc<GroupChart>, Arc<FibrationChart>, AlgebraFrame) {
        let (group, fibration) = builtin_triangular_affine();
        let frame = AlgebraFrame::new(
            &group,
            &[vec![k, 0.0, k, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        (Arc::new(group), Arc::new(fibration), frame)
    }

    #[test]
    fn flow_reproduces_exponential() {
        let group = GroupChart::abelian_exp().with_domain_radius(1.2);
        let params = SolverParams {
            rk4_step: 2e-3,
            ..SolverParams::default()
        };
        for k in [0.5, 1.0] {
            let out = exp_left_invariant(&group, &[k, 1.0], 1.0, &params).unwrap();
            assert!((out[0] - k.exp()).abs() <= 1e-10, "k={k}: {} vs {}", out[0], k.exp());
            assert!((out[1] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn flow_of_zero_stays_at_identity() {
        for group in [GroupChart::abelian_exp(), GroupChart::triangular_affine()] {
            let zero = vec![0.0; group.dim()];
            let out = exp_left_invariant(&group, &zero, 1.0, &SolverParams::default()).unwrap();
            assert_eq!(out, group.identity());
        }
    }

    #[test]
    fn flow_matches_triangular_hand_solution() {
        // X = (k I, e1): M(t) = e^{k t} I, translation ((e^{k t} - 1)/k, 0).
        let group = GroupChart::triangular_affine();
        let (k, t) = (1.0, 0.3);
        let out = exp_left_invariant(
            &group,
            &[k, 0.0, k, 1.0, 0.0],
            t,
            &SolverParams::default(),
        )
        .unwrap();
        let growth = (k * t).exp();
        let expect = [growth, 0.0, growth, (growth - 1.0) / k, 0.0];
        assert!(numeric::diff_inf_norm(&out, &expect) <= 1e-9);
    }

    #[test]
    fn exp_section_matches_cauchy_solution() {
        let (_, fibration, frame) = abelian_frame(2.0);
        let group = Arc::new(GroupChart::abelian_exp().with_domain_radius(1.2));
        let section =
            build_section_exp(group, fibration, frame, SolverParams::default()).unwrap();
        let value = section.evaluate(&[0.5]).unwrap();
        assert!((value[0] - 1.0f64.exp()).abs() <= 1e-8);
        assert!((value[1] - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn section_fixes_base_point() {
        let (group, fibration, frame) = abelian_frame(1.0);
        for route in [SolverRoute::Exp, SolverRoute::Ode] {
            let section = build_section(
                Arc::clone(&group),
                Arc::clone(&fibration),
                frame.clone(),
                SolverParams::default(),
                route,
            )
            .unwrap();
            let at_base = section.evaluate(&[0.0]).unwrap();
            assert!(
                numeric::diff_inf_norm(&at_base, group.identity()) <= DEFAULT_NEWTON_TOL,
                "route {route}"
            );
        }
    }

    #[test]
    fn ode_section_matches_cauchy_solution() {
        let (group, fibration, frame) = abelian_frame(1.5);
        let section =
            build_section_ode(group, fibration, frame, SolverParams::default()).unwrap();
        let x = 0.3;
        let value = section.evaluate(&[x]).unwrap();
        assert!((value[0] - (1.5 * x).exp()).abs() <= 1e-9);
        assert!((value[1] - x).abs() <= 1e-12);
    }

    #[test]
    fn exp_section_matches_triangular_closed_form() {
        let (group, fibration, frame) = triangular_frame(1.0);
        let section =
            build_section_exp(group, fibration, frame, SolverParams::default()).unwrap();
        let x = [0.2, -0.1];
        let value = section.evaluate(&x).unwrap();
        let scale = 1.0 + x[0];
        let expect = [scale, 0.0, scale, x[0], x[1]];
        assert!(numeric::diff_inf_norm(&value, &expect) <= 1e-8);
    }

    #[test]
    fn section_property_both_routes() {
        let (group, fibration, frame) = triangular_frame(0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for route in [SolverRoute::Exp, SolverRoute::Ode] {
            let section = build_section(
                Arc::clone(&group),
                Arc::clone(&fibration),
                frame.clone(),
                SolverParams::default(),
                route,
            )
            .unwrap();
            for _ in 0..10 {
                let x = [
                    rng.random_range(-0.3..=0.3),
                    rng.random_range(-0.3..=0.3),
                ];
                let gamma = section.evaluate(&x).unwrap();
                let projected = section.fibration().project(&gamma).unwrap();
                assert!(numeric::diff_inf_norm(&projected, &x) <= 1e-8, "route {route}");
            }
        }
    }

    #[test]
    fn routes_agree_on_closed_frames() {
        let (group, fibration, frame) = triangular_frame(1.0);
        let exp = build_section_exp(
            Arc::clone(&group),
            Arc::clone(&fibration),
            frame.clone(),
            SolverParams::default(),
        )
        .unwrap();
        let ode = build_section_ode(group, fibration, frame, SolverParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let x = [
                rng.random_range(-0.3..=0.3),
                rng.random_range(-0.3..=0.3),
            ];
            let a = exp.evaluate(&x).unwrap();
            let b = ode.evaluate(&x).unwrap();
            assert!(numeric::diff_inf_norm(&a, &b) <= 1e-6);
        }
    }

    #[test]
    fn ode_at_base_point_returns_identity_exactly() {
        let (group, fibration, frame) = abelian_frame(1.0);
        let section =
            build_section_ode(Arc::clone(&group), fibration, frame, SolverParams::default())
                .unwrap();
        assert_eq!(section.evaluate(&[0.0]).unwrap(), group.identity());
    }

    #[test]
    fn derived_product_is_addition_for_cauchy() {
        let (group, fibration, frame) = abelian_frame(1.0);
        let section =
            build_section_exp(group, fibration, frame, SolverParams::default()).unwrap();
        let product = section.derived_product(&[0.2], &[0.15]).unwrap();
        assert!((product[0] - 0.35).abs() <= 1e-9);
        let neutral = section.derived_product(&[0.0], &[0.22]).unwrap();
        assert!((neutral[0] - 0.22).abs() <= 1e-9);
    }

    #[test]
    fn derived_product_triangular_matches_arithmetic() {
        let (group, fibration, frame) = triangular_frame(1.0);
        let section =
            build_section_exp(group, fibration, frame, SolverParams::default()).unwrap();
        // p(sigma(X) sigma(Y)) = X + (1 + X1) Y
        let product = section
            .derived_product(&[0.1, 0.0], &[0.2, 0.1])
            .unwrap();
        assert!(numeric::diff_inf_norm(&product, &[0.32, 0.11]) <= 1e-8);
    }

    #[test]
    fn exp_route_rejects_nonclosed_frame() {
        let (group, fibration) = builtin_triangular_affine();
        let frame = AlgebraFrame::new(
            &group,
            &[vec![0.0, 1.0, 0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let err = build_section_exp(group, fibration, frame, SolverParams::default())
            .unwrap_err();
        assert!(matches!(err, SolveError::NotClosed { .. }));
    }

    #[test]
    fn ode_route_accepts_nonclosed_frame_and_is_path_dependent() {
        let (group, fibration) = builtin_triangular_affine();
        let group = Arc::new(group);
        let fibration = Arc::new(fibration);
        let frame = AlgebraFrame::new(
            &group,
            &[vec![0.0, 1.0, 0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let straight = build_section_ode(
            Arc::clone(&group),
            Arc::clone(&fibration),
            frame.clone(),
            SolverParams::default(),
        )
        .unwrap();
        let axes = build_section_ode(
            group,
            fibration,
            frame,
            SolverParams {
                path_strategy: PathStrategy::AxisLegs,
                ..SolverParams::default()
            },
        )
        .unwrap();
        let target = [0.3, 0.3];
        let a = straight.evaluate(&target).unwrap();
        let b = axes.evaluate(&target).unwrap();
        let gap = numeric::diff_inf_norm(&a, &b);
        assert!(gap > 1e-3, "expected visible path dependence, got {gap}");
    }

    #[test]
    fn path_strategies_agree_on_closed_frames() {
        let (group, fibration, frame) = triangular_frame(1.2);
        let straight = build_section_ode(
            Arc::clone(&group),
            Arc::clone(&fibration),
            frame.clone(),
            SolverParams::default(),
        )
        .unwrap();
        let axes = build_section_ode(
            group,
            fibration,
            frame,
            SolverParams {
                path_strategy: PathStrategy::AxisLegs,
                ..SolverParams::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let x = [
                rng.random_range(-0.3..=0.3),
                rng.random_range(-0.3..=0.3),
            ];
            let a = straight.evaluate(&x).unwrap();
            let b = axes.evaluate(&x).unwrap();
            assert!(numeric::diff_inf_norm(&a, &b) <= 1e-6);
        }
    }

    #[test]
    fn rk4_order_check() {
        // Halving the step should cut the error by about 2^4.
        let group = GroupChart::abelian_exp().with_domain_radius(1.2);
        let x = [1.0, 1.0];
        let run = |step: f64| {
            exp_left_invariant(
                &group,
                &x,
                1.0,
                &SolverParams {
                    rk4_step: step,
                    ..SolverParams::default()
                },
            )
            .unwrap()
        };
        let h = run(0.04);
        let h2 = run(0.02);
        let h4 = run(0.01);
        let coarse = numeric::diff_inf_norm(&h, &h2);
        let fine = numeric::diff_inf_norm(&h2, &h4);
        let ratio = coarse / fine;
        assert!((8.0..=32.0).contains(&ratio), "order ratio {ratio}");
    }

    #[test]
    fn rk4_order_check_on_section_values() {
        // The same fourth-order falloff is visible in the section itself.
        // (On the abelian chart: the scaled-identity triangular section is
        // linear along straight paths, so RK4 integrates it exactly and no
        // truncation error survives to measure.)
        let (group, fibration, frame) = abelian_frame(1.0);
        let target = [0.32];
        let run = |step: f64| {
            let section = build_section_ode(
                Arc::clone(&group),
                Arc::clone(&fibration),
                frame.clone(),
                SolverParams {
                    rk4_step: step,
                    ..SolverParams::default()
                },
            )
            .unwrap();
            section.evaluate(&target).unwrap()
        };
        let h = run(0.04);
        let h2 = run(0.02);
        let h4 = run(0.01);
        let ratio = numeric::diff_inf_norm(&h, &h2) / numeric::diff_inf_norm(&h2, &h4);
        assert!((8.0..=32.0).contains(&ratio), "order ratio {ratio}");
    }

    #[test]
    fn newton_divergence_reported_outside_neighborhood() {
        // 1 + k x1 = 0 kills transversality at x1 = -1/k; far beyond it the
        // solve cannot converge.
        let (group, fibration, frame) = triangular_frame(1.0);
        let section = build_section_exp(group, fibration, frame, SolverParams::default())
            .unwrap();
        let err = section.evaluate(&[-6.0, 0.0]).unwrap_err();
        assert!(
            matches!(
                err,
                SolveError::NewtonDiverged { .. }
                    | SolveError::SingularNewtonJacobian
                    | SolveError::Escaped { .. }
            ),
            "got {err:?}"
        );
    }

    #[test]
    fn ode_route_detects_transversality_loss() {
        let (group, fibration, frame) = triangular_frame(1.0);
        let section =
            build_section_ode(group, fibration, frame, SolverParams::default()).unwrap();
        // Walking x1 towards -1 sends the scale 1 + x1 to zero.
        let err = section.evaluate(&[-1.0, 0.0]).unwrap_err();
        assert!(
            matches!(
                err,
                SolveError::TransversalityLost { .. } | SolveError::Escaped { .. }
            ),
            "got {err:?}"
        );
    }

    #[test]
    fn concurrent_evaluation_matches_sequential() {
        let (group, fibration, frame) = triangular_frame(1.0);
        let section = Arc::new(
            build_section_exp(group, fibration, frame, SolverParams::default()).unwrap(),
        );
        let targets: Vec<[f64; 2]> = (0..8)
            .map(|i| [0.05 * i as f64 - 0.2, 0.03 * i as f64 - 0.1])
            .collect();
        let sequential: Vec<Vec<f64>> = targets
            .iter()
            .map(|x| section.evaluate(x).unwrap())
            .collect();
        let handles: Vec<_> = targets
            .iter()
            .map(|x| {
                let section = Arc::clone(&section);
                let x = *x;
                std::thread::spawn(move || section.evaluate(&x).unwrap())
            })
            .collect();
        for (handle, expect) in handles.into_iter().zip(sequential) {
            assert_eq!(handle.join().unwrap(), expect);
        }
    }

    #[test]
    fn step_larger_than_domain_radius_rejected() {
        let (group, fibration, frame) = abelian_frame(1.0);
        let err = build_section_exp(
            group,
            fibration,
            frame,
            SolverParams {
                rk4_step: 0.7,
                ..SolverParams::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, SolveError::BadParams(_)));
    }
}
