//! Numerical residual checks: the functional equation, the identity
//! condition, the differential equation and the tangency of left
//! translates, each evaluated over sample grids into machine-readable
//! reports. A report with an empty failure list is a pass; injected
//! non-solutions must produce non-empty ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::numeric;
use crate::solver::{Section, SolveError};

/// Central-difference step for section differentials. With section noise
/// near 1e-10 this leaves a residual floor around 1e-6, well under the
/// 1e-5 pass tolerances.
pub const DSIGMA_FD_STEP: f64 = 1e-5;

/// Default tolerances per check.
pub const FUNCTIONAL_TOL: f64 = 1e-6;
pub const DIFFERENTIAL_TOL: f64 = 1e-5;
pub const TANGENCY_TOL: f64 = 1e-5;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const PATH_INDEPENDENCE_TOL: f64 = 1e-6;
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    /// `|sigma(x0) - e|` at the base point only.
    Identity,
    /// `sigma(p(sigma(x) sigma(y))) - sigma(x) sigma(y)` over point pairs.
    Functional,
    /// The differential equation residual over single points.
    Differential,
    /// Off-tangent component of translated frame vectors over single points.
    Tangency,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Identity => "identity",
            CheckKind::Functional => "functional",
            CheckKind::Differential => "differential",
            CheckKind::Tangency => "tangency",
        }
    }
}

/// A centered box in the base space.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl SampleRegion {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        SampleRegion { center, radius }
    }

    pub fn around_base(section: &dyn Section, radius: f64) -> Self {
        SampleRegion {
            center: section.fibration().base_point().to_vec(),
            radius,
        }
    }

    /// The uniform grid with `density` points per axis; a single point
    /// when the density is 1 or the radius is zero.
    pub fn grid_points(&self, density: usize) -> Vec<Vec<f64>> {
        let m = self.center.len();
        if density <= 1 || self.radius == 0.0 {
            return vec![self.center.clone()];
        }
        let axis: Vec<Vec<f64>> = self
            .center
            .iter()
            .map(|c| {
                (0..density)
                    .map(|k| c - self.radius + 2.0 * self.radius * k as f64 / (density - 1) as f64)
                    .collect()
            })
            .collect();
        let mut points = Vec::with_capacity(density.pow(m as u32));
        let mut counters = vec![0usize; m];
        loop {
            points.push((0..m).map(|i| axis[i][counters[i]]).collect());
            let mut dim = 0;
            loop {
                if dim == m {
                    return points;
                }
                counters[dim] += 1;
                if counters[dim] < density {
                    break;
                }
                counters[dim] = 0;
                dim += 1;
            }
        }
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.center
            .iter()
            .map(|c| c + rng.random_range(-self.radius..=self.radius))
            .collect()
    }
}

/// One sample that either exceeded the tolerance or failed to evaluate.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    /// The sample point; for pair checks the concatenation of both points.
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregated residuals of one check over a sample set. Statistics cover
/// the successfully evaluated samples; failures list, in sample order,
/// every sample over tolerance plus every evaluation error.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub check: String,
    pub samples: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub failures: Vec<FailureRecord>,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Accumulator {
    check: String,
    tolerance: f64,
    samples: usize,
    max: f64,
    sum: f64,
    ok_count: usize,
    failures: Vec<FailureRecord>,
}

impl Accumulator {
    fn new(check: &str, tolerance: f64) -> Self {
        Accumulator {
            check: check.to_string(),
            tolerance,
            samples: 0,
            max: 0.0,
            sum: 0.0,
            ok_count: 0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, point: Vec<f64>, outcome: Result<f64, SolveError>) {
        self.samples += 1;
        match outcome {
            Ok(residual) => {
                self.max = self.max.max(residual);
                self.sum += residual;
                self.ok_count += 1;
                if residual > self.tolerance {
                    self.failures.push(FailureRecord {
                        point,
                        residual: Some(residual),
                        error: None,
                    });
                }
            }
            Err(err) => {
                self.failures.push(FailureRecord {
                    point,
                    residual: None,
                    error: Some(err.to_string()),
                });
            }
        }
    }

    fn finish(self) -> ResidualReport {
        ResidualReport {
            check: self.check,
            samples: self.samples,
            max_residual: self.max,
            mean_residual: if self.ok_count > 0 {
                self.sum / self.ok_count as f64
            } else {
                0.0
            },
            tolerance: self.tolerance,
            failures: self.failures,
        }
    }
}

/// Componentwise residual of the functional equation at `(x, y)`:
/// `sigma(p(mu(sigma(x), sigma(y)))) - mu(sigma(x), sigma(y))`.
pub fn functional_residual(
    section: &dyn Section,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let sx = section.evaluate(x)?;
    let sy = section.evaluate(y)?;
    let product = section.group().mu(&sx, &sy)?;
    let projected = section.fibration().project(&product)?;
    let lifted = section.evaluate(&projected)?;
    Ok(lifted
        .iter()
        .zip(&product)
        .map(|(a, b)| a - b)
        .collect())
}

/// `|sigma(x0) - e|` in the sup norm.
pub fn identity_residual(section: &dyn Section) -> Result<f64, SolveError> {
    let at_base = section.evaluate(section.fibration().base_point())?;
    Ok(numeric::diff_inf_norm(
        &at_base,
        section.group().identity(),
    ))
}

/// Finite-difference Jacobian of the section at `x` (n rows, m columns).
pub fn dsigma(section: &dyn Section, x: &[f64]) -> Result<DMatrix<f64>, SolveError> {
    numeric::jacobian_central(|p: &[f64]| section.evaluate(p), x, DSIGMA_FD_STEP)
}

/// Residual of the differential equation at `x`: with `L` the left
/// translate of the base-point section differential, the worst over base
/// directions of `|Dsigma(x) Dp(sigma(x)) L xi - L xi|`.
pub fn differential_residual(section: &dyn Section, x: &[f64]) -> Result<f64, SolveError> {
    let base = section.fibration().base_point().to_vec();
    let f0 = dsigma(section, &base)?;
    let gamma = section.evaluate(x)?;
    let translate = section.group().d2mu_at(&gamma)?;
    let l = &translate * &f0;
    let dsx = dsigma(section, x)?;
    let dp = section.fibration().dp(section.group(), &gamma)?;
    let mut worst = 0.0_f64;
    for j in 0..l.ncols() {
        let v = l.column(j).into_owned();
        let lhs = &dsx * (&dp * &v);
        let residual = (&lhs - &v).amax();
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Tangency of left-translated frame vectors to the section image at
/// `sigma(x)`: worst normalized component orthogonal to the column space
/// of `Dsigma(x)`.
pub fn tangency_residual(section: &dyn Section, x: &[f64]) -> Result<f64, SolveError> {
    let base = section.fibration().base_point().to_vec();
    let f0 = dsigma(section, &base)?;
    let gamma = section.evaluate(x)?;
    let dsx = dsigma(section, x)?;
    let q = numeric::orthonormal_columns(&dsx);
    let mut worst = 0.0_f64;
    for j in 0..f0.ncols() {
        let column: Vec<f64> = f0.column(j).iter().copied().collect();
        let translated = section.group().d2mu_apply(&gamma, &column)?;
        let v = DVector::from_vec(translated);
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        let residual = numeric::orthogonal_component(&q, &v).norm() / norm;
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// How a grid report samples: a uniform grid of `grid_density` points per
/// axis plus `random_samples` seeded draws, all inside `region`.
#[derive(Debug, Clone, Serialize)]
pub struct SamplePlan {
    pub region: SampleRegion,
    pub grid_density: usize,
    pub random_samples: usize,
    pub seed: u64,
}

/// Run one check over the sample plan. Evaluation errors become failure
/// records, not aborts; the report is deterministic for a fixed seed.
pub fn grid_report(
    check: CheckKind,
    section: &dyn Section,
    plan: &SamplePlan,
    tolerance: f64,
) -> ResidualReport {
    let mut acc = Accumulator::new(check.name(), tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    match check {
        CheckKind::Identity => {
            acc.record(
                section.fibration().base_point().to_vec(),
                identity_residual(section),
            );
        }
        CheckKind::Functional => {
            let points = plan.region.grid_points(plan.grid_density);
            for x in &points {
                for y in &points {
                    let mut pair = x.clone();
                    pair.extend_from_slice(y);
                    let outcome = functional_residual(section, x, y)
                        .map(|r| numeric::inf_norm(&r));
                    acc.record(pair, outcome);
                }
            }
            for _ in 0..plan.random_samples {
                let x = plan.region.random_point(&mut rng);
                let y = plan.region.random_point(&mut rng);
                let mut pair = x.clone();
                pair.extend_from_slice(&y);
                let outcome =
                    functional_residual(section, &x, &y).map(|r| numeric::inf_norm(&r));
                acc.record(pair, outcome);
            }
        }
        CheckKind::Differential | CheckKind::Tangency => {
            let op = |x: &[f64]| -> Result<f64, SolveError> {
                match check {
                    CheckKind::Differential => differential_residual(section, x),
                    _ => tangency_residual(section, x),
                }
            };
            for x in plan.region.grid_points(plan.grid_density) {
                let outcome = op(&x);
                acc.record(x, outcome);
            }
            for _ in 0..plan.random_samples {
                let x = plan.region.random_point(&mut rng);
                let outcome = op(&x);
                acc.record(x, outcome);
            }
        }
    }
    acc.finish()
}

/// Sup-norm disagreement of two sections over the plan; used for the path
/// independence and route agreement checks.
pub fn section_agreement_report(
    check_name: &str,
    a: &dyn Section,
    b: &dyn Section,
    plan: &SamplePlan,
    tolerance: f64,
) -> ResidualReport {
    let mut acc = Accumulator::new(check_name, tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let compare = |x: &[f64]| -> Result<f64, SolveError> {
        let va = a.evaluate(x)?;
        let vb = b.evaluate(x)?;
        Ok(numeric::diff_inf_norm(&va, &vb))
    };
    for x in plan.region.grid_points(plan.grid_density) {
        let outcome = compare(&x);
        acc.record(x, outcome);
    }
    for _ in 0..plan.random_samples {
        let x = plan.region.random_point(&mut rng);
        let outcome = compare(&x);
        acc.record(x, outcome);
    }
    acc.finish()
}

/// Associativity of the derived base product over seeded triples:
/// `|(x o y) o z - x o (y o z)|`.
pub fn derived_product_associativity_report(
    section: &dyn Section,
    plan: &SamplePlan,
    tolerance: f64,
) -> ResidualReport {
    let mut acc = Accumulator::new("derived_product_associativity", tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let count = plan.random_samples.max(1);
    for _ in 0..count {
        let x = plan.region.random_point(&mut rng);
        let y = plan.region.random_point(&mut rng);
        let z = plan.region.random_point(&mut rng);
        let mut triple = x.clone();
        triple.extend_from_slice(&y);
        triple.extend_from_slice(&z);
        let outcome = (|| {
            let xy = section.derived_product(&x, &y)?;
            let left = section.derived_product(&xy, &z)?;
            let yz = section.derived_product(&y, &z)?;
            let right = section.derived_product(&x, &yz)?;
            Ok(numeric::diff_inf_norm(&left, &right))
        })();
        acc.record(triple, outcome);
    }
    acc.finish()
}
