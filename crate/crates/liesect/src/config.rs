//! The JSON problem format: group, fibration, frame, solver parameters and
//! verification settings, with validation errors that name the offending
//! key path.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::algebra::{AlgebraError, AlgebraFrame};
use crate::expr::parse;
use crate::group::{FibrationChart, GroupChart, GroupError, ProjectionRule};
use crate::solver::{PathStrategy, SolverParams, SolverRoute};

pub const DEFAULT_REGION_RADIUS: f64 = 0.3;
pub const DEFAULT_GRID_DENSITY: usize = 5;
pub const DEFAULT_RANDOM_SAMPLES: usize = 20;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON in `{path}`: {message}")]
    Json { path: String, message: String },
    #[error("config error at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    group: RawGroup,
    #[serde(default)]
    fibration: Option<RawFibration>,
    frame: Vec<Vec<f64>>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    verify: RawVerify,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    kind: String,
    #[serde(default)]
    identity: Option<Vec<f64>>,
    #[serde(default)]
    product: Option<Vec<String>>,
    #[serde(default)]
    domain_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFibration {
    /// One-based coordinate positions.
    #[serde(default)]
    indices: Option<Vec<usize>>,
    #[serde(default)]
    expressions: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    route: Option<String>,
    rk4_step: Option<f64>,
    newton_tol: Option<f64>,
    max_newton_iter: Option<usize>,
    path_strategy: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawVerify {
    region_radius: Option<f64>,
    grid_density: Option<usize>,
    tolerance: Option<f64>,
    random_samples: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub region_radius: f64,
    pub grid_density: usize,
    pub tolerance: f64,
    pub random_samples: usize,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            region_radius: DEFAULT_REGION_RADIUS,
            grid_density: DEFAULT_GRID_DENSITY,
            tolerance: crate::verify::FUNCTIONAL_TOL,
            random_samples: DEFAULT_RANDOM_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

/// A fully validated problem: every field built, every default applied.
#[derive(Debug)]
pub struct ProblemConfig {
    pub group: GroupChart,
    pub fibration: FibrationChart,
    pub frame: AlgebraFrame,
    pub solver: SolverParams,
    pub route: SolverRoute,
    pub verify: VerifySettings,
}

/// Load and validate a problem from a JSON file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemConfig, ConfigError> {
    let shown = path.as_ref().display().to_string();
    let text = fs::read_to_string(path.as_ref()).map_err(|e| ConfigError::Io {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    from_json_str(&text, &shown)
}

/// Validate a problem from JSON text; `origin` only labels errors.
pub fn from_json_str(text: &str, origin: &str) -> Result<ProblemConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Json {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    build(raw)
}

fn build(raw: RawConfig) -> Result<ProblemConfig, ConfigError> {
    let group = build_group(&raw.group)?;
    let fibration = build_fibration(&raw.group.kind, raw.fibration.as_ref(), &group)?;
    let frame = build_frame(&raw.frame, &group, &fibration)?;
    let (solver, route) = build_solver(&raw.solver, &group)?;
    let verify = build_verify(&raw.verify)?;
    Ok(ProblemConfig {
        group,
        fibration,
        frame,
        solver,
        route,
        verify,
    })
}

fn build_group(raw: &RawGroup) -> Result<GroupChart, ConfigError> {
    let mut group = match raw.kind.as_str() {
        "abelian_exp" => {
            reject_custom_fields(raw)?;
            GroupChart::abelian_exp()
        }
        "triangular_affine" => {
            reject_custom_fields(raw)?;
            GroupChart::triangular_affine()
        }
        "custom" => {
            let identity = raw
                .identity
                .clone()
                .ok_or_else(|| invalid("group.identity", "required for custom groups"))?;
            let product = raw
                .product
                .as_ref()
                .ok_or_else(|| invalid("group.product", "required for custom groups"))?;
            let mut components = Vec::with_capacity(product.len());
            for (i, text) in product.iter().enumerate() {
                components.push(
                    parse(text).map_err(|e| invalid(format!("group.product[{i}]"), e))?,
                );
            }
            GroupChart::custom(
                identity,
                components,
                raw.domain_radius
                    .unwrap_or(crate::group::DEFAULT_DOMAIN_RADIUS),
            )
            .map_err(map_group_error)?
        }
        other => {
            return Err(invalid(
                "group.kind",
                format!(
                    "unknown kind `{other}`; expected abelian_exp, triangular_affine or custom"
                ),
            ))
        }
    };
    if raw.kind != "custom" {
        if let Some(radius) = raw.domain_radius {
            let radius_ok = radius > 0.0 && radius.is_finite();
            if !radius_ok {
                return Err(invalid(
                    "group.domain_radius",
                    format!("must be positive and finite, got {radius}"),
                ));
            }
            group = group.with_domain_radius(radius);
        }
    }
    Ok(group)
}

fn reject_custom_fields(raw: &RawGroup) -> Result<(), ConfigError> {
    if raw.identity.is_some() {
        return Err(invalid(
            "group.identity",
            format!("only valid for custom groups, not `{}`", raw.kind),
        ));
    }
    if raw.product.is_some() {
        return Err(invalid(
            "group.product",
            format!("only valid for custom groups, not `{}`", raw.kind),
        ));
    }
    Ok(())
}

fn map_group_error(err: GroupError) -> ConfigError {
    match err {
        GroupError::ComponentCount { expected, got } => invalid(
            "group.product",
            format!("expected {expected} component expressions, got {got}"),
        ),
        GroupError::WrongVariableKind { component, var } => invalid(
            format!("group.product[{component}]"),
            format!("variable `{var}` is not valid in a product rule"),
        ),
        GroupError::IndexOutOfRange { component, var, n } => invalid(
            format!("group.product[{component}]"),
            format!("variable `{var}` exceeds the chart dimension {n}"),
        ),
        GroupError::NonFinite => invalid("group.identity", "coordinates must be finite"),
        GroupError::BadDomainRadius(r) => invalid(
            "group.domain_radius",
            format!("must be positive and finite, got {r}"),
        ),
        other => invalid("group", other),
    }
}

fn build_fibration(
    kind: &str,
    raw: Option<&RawFibration>,
    group: &GroupChart,
) -> Result<FibrationChart, ConfigError> {
    let Some(raw) = raw else {
        return match kind {
            "abelian_exp" => Ok(FibrationChart::from_indices(group, &[1]).expect("builtin")),
            "triangular_affine" => {
                Ok(FibrationChart::from_indices(group, &[3, 4]).expect("builtin"))
            }
            _ => Err(invalid("fibration", "required for custom groups")),
        };
    };
    match (&raw.indices, &raw.expressions) {
        (Some(_), Some(_)) | (None, None) => Err(invalid(
            "fibration",
            "provide exactly one of `indices` or `expressions`",
        )),
        (Some(indices), None) => {
            let mut zero_based = Vec::with_capacity(indices.len());
            for (i, &index) in indices.iter().enumerate() {
                if index == 0 || index > group.dim() {
                    return Err(invalid(
                        format!("fibration.indices[{i}]"),
                        format!("index {index} out of range 1..={}", group.dim()),
                    ));
                }
                zero_based.push(index - 1);
            }
            FibrationChart::from_indices(group, &zero_based)
                .map_err(|e| invalid("fibration", e))
        }
        (None, Some(expressions)) => {
            let mut parsed = Vec::with_capacity(expressions.len());
            for (i, text) in expressions.iter().enumerate() {
                parsed.push(
                    parse(text)
                        .map_err(|e| invalid(format!("fibration.expressions[{i}]"), e))?,
                );
            }
            FibrationChart::from_exprs(group, parsed).map_err(|e| match e {
                GroupError::WrongVariableKind { component, var } => invalid(
                    format!("fibration.expressions[{component}]"),
                    format!("variable `{var}` is not valid in a projection"),
                ),
                GroupError::IndexOutOfRange { component, var, n } => invalid(
                    format!("fibration.expressions[{component}]"),
                    format!("variable `{var}` exceeds the chart dimension {n}"),
                ),
                other => invalid("fibration", other),
            })
        }
    }
}

fn build_frame(
    rows: &[Vec<f64>],
    group: &GroupChart,
    fibration: &FibrationChart,
) -> Result<AlgebraFrame, ConfigError> {
    if rows.len() != fibration.base_dim() {
        return Err(invalid(
            "frame",
            format!(
                "expected {} rows (the base dimension), got {}",
                fibration.base_dim(),
                rows.len()
            ),
        ));
    }
    AlgebraFrame::new(group, rows).map_err(|e| match e {
        AlgebraError::ColumnDimension {
            index,
            expected,
            got,
        } => invalid(
            format!("frame[{index}]"),
            format!("has {got} entries, expected {expected}"),
        ),
        AlgebraError::NonFinite { index } => {
            invalid(format!("frame[{index}]"), "entries must be finite")
        }
        other => invalid("frame", other),
    })
}

fn build_solver(
    raw: &RawSolver,
    group: &GroupChart,
) -> Result<(SolverParams, SolverRoute), ConfigError> {
    let mut params = SolverParams::default();
    if let Some(step) = raw.rk4_step {
        params.rk4_step = step;
    }
    if let Some(tol) = raw.newton_tol {
        params.newton_tol = tol;
    }
    if let Some(iters) = raw.max_newton_iter {
        params.max_newton_iter = iters;
    }
    if let Some(strategy) = raw.path_strategy.as_deref() {
        params.path_strategy = match strategy {
            "straight_line" => PathStrategy::StraightLine,
            "axis_legs" => PathStrategy::AxisLegs,
            other => {
                return Err(invalid(
                    "solver.path_strategy",
                    format!("unknown strategy `{other}`; expected straight_line or axis_legs"),
                ))
            }
        };
    }
    params
        .validate(group)
        .map_err(|e| invalid("solver", e))?;
    let route = match raw.route.as_deref() {
        None | Some("exp") => SolverRoute::Exp,
        Some("ode") => SolverRoute::Ode,
        Some(other) => {
            return Err(invalid(
                "solver.route",
                format!("unknown route `{other}`; expected exp or ode"),
            ))
        }
    };
    Ok((params, route))
}

fn build_verify(raw: &RawVerify) -> Result<VerifySettings, ConfigError> {
    let mut settings = VerifySettings::default();
    if let Some(radius) = raw.region_radius {
        let radius_ok = radius >= 0.0 && radius.is_finite();
        if !radius_ok {
            return Err(invalid(
                "verify.region_radius",
                format!("must be non-negative and finite, got {radius}"),
            ));
        }
        settings.region_radius = radius;
    }
    if let Some(density) = raw.grid_density {
        if density == 0 {
            return Err(invalid("verify.grid_density", "must be at least 1"));
        }
        settings.grid_density = density;
    }
    if let Some(tolerance) = raw.tolerance {
        let tolerance_ok = tolerance > 0.0 && tolerance.is_finite();
        if !tolerance_ok {
            return Err(invalid(
                "verify.tolerance",
                format!("must be positive and finite, got {tolerance}"),
            ));
        }
        settings.tolerance = tolerance;
    }
    if let Some(samples) = raw.random_samples {
        settings.random_samples = samples;
    }
    if let Some(seed) = raw.seed {
        settings.seed = seed;
    }
    Ok(settings)
}

/// The shipped demo and example configurations use this projection detail:
/// builtin fibrations exist even when the `fibration` key is omitted.
pub fn projection_summary(rule: &ProjectionRule) -> String {
    match rule {
        ProjectionRule::Indices(indices) => {
            let shown: Vec<String> = indices.iter().map(|i| (i + 1).to_string()).collect();
            format!("coordinates [{}]", shown.join(", "))
        }
        ProjectionRule::Exprs(exprs) => {
            let shown: Vec<String> = exprs.iter().map(|e| e.to_string()).collect();
            format!("expressions [{}]", shown.join(", "))
        }
    }
}
