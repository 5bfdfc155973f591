//! Python bindings: group charts, fibrations, frames as plain lists, the
//! two section routes, and the residual checks. Reports cross the boundary
//! as dictionaries mirroring the CLI's JSON.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};

use liesect::algebra::{self, AlgebraFrame};
use liesect::expr;
use liesect::group::{FibrationChart, GroupChart};
use liesect::solver::{
    self, reference, PathStrategy, Section, SolveError, SolverParams, SolverRoute,
};
use liesect::verify::{self, CheckKind, SamplePlan, SampleRegion};

fn value_error(err: impl ToString) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn numeric_error(err: SolveError) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => PyString::new(py, s).into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn report_to_py<'py>(py: Python<'py>, report: impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(report).map_err(value_error)?;
    json_to_py(py, &value)
}

fn matrix_rows(matrix: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..matrix.nrows())
        .map(|i| matrix.row(i).iter().copied().collect())
        .collect()
}

#[pyclass(frozen, name = "GroupChart", module = "liesect_py")]
struct PyGroupChart {
    inner: Arc<GroupChart>,
}

#[pymethods]
impl PyGroupChart {
    /// The multiplicative-reals-times-line builtin.
    #[staticmethod]
    fn abelian_exp() -> Self {
        PyGroupChart {
            inner: Arc::new(GroupChart::abelian_exp()),
        }
    }

    /// The lower-triangular affine builtin.
    #[staticmethod]
    fn triangular_affine() -> Self {
        PyGroupChart {
            inner: Arc::new(GroupChart::triangular_affine()),
        }
    }

    /// A chart from one product expression per coordinate over g1..gn,
    /// h1..hn.
    #[staticmethod]
    #[pyo3(signature = (identity, product, domain_radius = 0.5))]
    fn custom(identity: Vec<f64>, product: Vec<String>, domain_radius: f64) -> PyResult<Self> {
        let mut components = Vec::with_capacity(product.len());
        for (i, text) in product.iter().enumerate() {
            components.push(
                expr::parse(text).map_err(|e| value_error(format!("product[{i}]: {e}")))?,
            );
        }
        let chart =
            GroupChart::custom(identity, components, domain_radius).map_err(value_error)?;
        Ok(PyGroupChart {
            inner: Arc::new(chart),
        })
    }

    fn with_domain_radius(&self, radius: f64) -> Self {
        PyGroupChart {
            inner: Arc::new((*self.inner).clone().with_domain_radius(radius)),
        }
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn identity(&self) -> Vec<f64> {
        self.inner.identity().to_vec()
    }

    #[getter]
    fn domain_radius(&self) -> f64 {
        self.inner.domain_radius()
    }

    /// Group product in chart coordinates.
    fn mu(&self, g: Vec<f64>, h: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.mu(&g, &h).map_err(value_error)
    }

    /// Newton inverse.
    fn inverse(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.inverse(&g).map_err(value_error)
    }

    /// Tangent map of left multiplication by g, as rows.
    fn d2mu_at(&self, g: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let matrix = self.inner.d2mu_at(&g).map_err(value_error)?;
        Ok(matrix_rows(&matrix))
    }

    /// Lie bracket of tangent vectors at the identity.
    fn bracket(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        algebra::bracket(&self.inner, &x, &y).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("GroupChart(dimension={})", self.inner.dim())
    }
}

#[pyclass(frozen, name = "FibrationChart", module = "liesect_py")]
struct PyFibrationChart {
    inner: Arc<FibrationChart>,
}

#[pymethods]
impl PyFibrationChart {
    /// Coordinate projection onto one-based positions.
    #[staticmethod]
    fn from_indices(group: PyRef<'_, PyGroupChart>, indices: Vec<usize>) -> PyResult<Self> {
        let mut zero_based = Vec::with_capacity(indices.len());
        for index in indices {
            if index == 0 {
                return Err(value_error("indices are one-based"));
            }
            zero_based.push(index - 1);
        }
        let chart =
            FibrationChart::from_indices(&group.inner, &zero_based).map_err(value_error)?;
        Ok(PyFibrationChart {
            inner: Arc::new(chart),
        })
    }

    /// Projection from expressions over x1..xn.
    #[staticmethod]
    fn from_expressions(
        group: PyRef<'_, PyGroupChart>,
        expressions: Vec<String>,
    ) -> PyResult<Self> {
        let mut parsed = Vec::with_capacity(expressions.len());
        for (i, text) in expressions.iter().enumerate() {
            parsed.push(
                expr::parse(text).map_err(|e| value_error(format!("expressions[{i}]: {e}")))?,
            );
        }
        let chart = FibrationChart::from_exprs(&group.inner, parsed).map_err(value_error)?;
        Ok(PyFibrationChart {
            inner: Arc::new(chart),
        })
    }

    #[getter]
    fn base_point(&self) -> Vec<f64> {
        self.inner.base_point().to_vec()
    }

    #[getter]
    fn base_dimension(&self) -> usize {
        self.inner.base_dim()
    }

    fn project(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&g).map_err(value_error)
    }

    fn dp(&self, group: PyRef<'_, PyGroupChart>, g: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let matrix = self.inner.dp(&group.inner, &g).map_err(value_error)?;
        Ok(matrix_rows(&matrix))
    }

    /// Orthonormal basis vectors of the vertical subspace.
    fn vertical_subspace(&self, group: PyRef<'_, PyGroupChart>) -> PyResult<Vec<Vec<f64>>> {
        let basis = self
            .inner
            .vertical_subspace(&group.inner)
            .map_err(value_error)?;
        Ok((0..basis.ncols())
            .map(|j| basis.column(j).iter().copied().collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("FibrationChart(base_dimension={})", self.inner.base_dim())
    }
}

fn build_frame(group: &GroupChart, rows: &[Vec<f64>]) -> PyResult<AlgebraFrame> {
    AlgebraFrame::new(group, rows).map_err(value_error)
}

fn build_params(
    rk4_step: f64,
    newton_tol: f64,
    max_newton_iter: usize,
    path_strategy: &str,
) -> PyResult<SolverParams> {
    let path_strategy = match path_strategy {
        "straight_line" => PathStrategy::StraightLine,
        "axis_legs" => PathStrategy::AxisLegs,
        other => {
            return Err(value_error(format!(
                "unknown path strategy `{other}`; expected straight_line or axis_legs"
            )))
        }
    };
    Ok(SolverParams {
        rk4_step,
        newton_tol,
        max_newton_iter,
        path_strategy,
    })
}

#[pyclass(frozen, name = "Section", module = "liesect_py")]
struct PySection {
    inner: Arc<dyn Section>,
    label: String,
}

#[pymethods]
impl PySection {
    /// Section coordinates at a base point.
    fn evaluate(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&x).map_err(numeric_error)
    }

    /// The induced local product on the base.
    fn derived_product(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.derived_product(&x, &y).map_err(numeric_error)
    }

    #[getter]
    fn base_point(&self) -> Vec<f64> {
        self.inner.fibration().base_point().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Section({})", self.label)
    }
}

/// Build a section from a frame by either route.
#[pyfunction]
#[pyo3(signature = (
    group, fibration, frame,
    route = "exp",
    rk4_step = solver::DEFAULT_RK4_STEP,
    newton_tol = solver::DEFAULT_NEWTON_TOL,
    max_newton_iter = solver::DEFAULT_MAX_NEWTON_ITER,
    path_strategy = "straight_line",
))]
#[allow(clippy::too_many_arguments)]
fn build_section(
    group: PyRef<'_, PyGroupChart>,
    fibration: PyRef<'_, PyFibrationChart>,
    frame: Vec<Vec<f64>>,
    route: &str,
    rk4_step: f64,
    newton_tol: f64,
    max_newton_iter: usize,
    path_strategy: &str,
) -> PyResult<PySection> {
    let route = match route {
        "exp" => SolverRoute::Exp,
        "ode" => SolverRoute::Ode,
        other => {
            return Err(value_error(format!(
                "unknown route `{other}`; expected exp or ode"
            )))
        }
    };
    let frame = build_frame(&group.inner, &frame)?;
    let params = build_params(rk4_step, newton_tol, max_newton_iter, path_strategy)?;
    let section = solver::build_section(
        Arc::clone(&group.inner),
        Arc::clone(&fibration.inner),
        frame,
        params,
        route,
    )
    .map_err(numeric_error)?;
    Ok(PySection {
        inner: Arc::new(section),
        label: format!("route={route}"),
    })
}

/// Flow of the left-invariant field of x from the identity over [0, t].
#[pyfunction]
#[pyo3(signature = (group, x, t, rk4_step = solver::DEFAULT_RK4_STEP))]
fn exp_left_invariant(
    group: PyRef<'_, PyGroupChart>,
    x: Vec<f64>,
    t: f64,
    rk4_step: f64,
) -> PyResult<Vec<f64>> {
    let params = SolverParams {
        rk4_step,
        ..SolverParams::default()
    };
    solver::exp_left_invariant(&group.inner, &x, t, &params).map_err(numeric_error)
}

/// The closed-form exponential solution (e^{k x}, x) on the abelian builtin.
#[pyfunction]
fn reference_exponential(k: f64) -> PySection {
    PySection {
        inner: Arc::new(reference::exponential(k)),
        label: format!("reference exponential k={k}"),
    }
}

/// The scalar-matrix solution ((1 + k X1) I, X) on the triangular builtin.
#[pyfunction]
fn reference_triangular(k: f64) -> PySection {
    PySection {
        inner: Arc::new(reference::triangular_scaled(k)),
        label: format!("reference triangular k={k}"),
    }
}

/// The injected non-solution with first component 1 + x.
#[pyfunction]
fn reference_affine_nonsolution() -> PySection {
    PySection {
        inner: Arc::new(reference::affine_nonsolution()),
        label: "reference affine non-solution".into(),
    }
}

#[pyfunction]
#[pyo3(signature = (group, frame, tolerance = algebra::DEFAULT_CLOSURE_TOL))]
fn closure_check<'py>(
    py: Python<'py>,
    group: PyRef<'_, PyGroupChart>,
    frame: Vec<Vec<f64>>,
    tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let frame = build_frame(&group.inner, &frame)?;
    let report =
        algebra::closure_check(&group.inner, &frame, tolerance).map_err(value_error)?;
    report_to_py(py, report)
}

#[pyfunction]
fn transversality_check<'py>(
    py: Python<'py>,
    group: PyRef<'_, PyGroupChart>,
    fibration: PyRef<'_, PyFibrationChart>,
    frame: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let frame = build_frame(&group.inner, &frame)?;
    let report = algebra::transversality_check(&group.inner, &fibration.inner, &frame)
        .map_err(value_error)?;
    report_to_py(py, report)
}

#[pyfunction]
fn structure_constants<'py>(
    py: Python<'py>,
    group: PyRef<'_, PyGroupChart>,
    frame: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let frame = build_frame(&group.inner, &frame)?;
    let pairs = algebra::structure_constants(&group.inner, &frame).map_err(value_error)?;
    report_to_py(py, pairs)
}

#[pyfunction]
fn functional_residual(
    section: PyRef<'_, PySection>,
    x: Vec<f64>,
    y: Vec<f64>,
) -> PyResult<Vec<f64>> {
    verify::functional_residual(section.inner.as_ref(), &x, &y).map_err(numeric_error)
}

#[pyfunction]
fn identity_residual(section: PyRef<'_, PySection>) -> PyResult<f64> {
    verify::identity_residual(section.inner.as_ref()).map_err(numeric_error)
}

#[pyfunction]
fn differential_residual(section: PyRef<'_, PySection>, x: Vec<f64>) -> PyResult<f64> {
    verify::differential_residual(section.inner.as_ref(), &x).map_err(numeric_error)
}

#[pyfunction]
fn tangency_residual(section: PyRef<'_, PySection>, x: Vec<f64>) -> PyResult<f64> {
    verify::tangency_residual(section.inner.as_ref(), &x).map_err(numeric_error)
}

/// Run one residual check over a sample grid; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (
    check, section, center, radius,
    grid_density = 5, random_samples = 0, seed = 42, tolerance = 1e-6,
))]
#[allow(clippy::too_many_arguments)]
fn grid_report<'py>(
    py: Python<'py>,
    check: &str,
    section: PyRef<'_, PySection>,
    center: Vec<f64>,
    radius: f64,
    grid_density: usize,
    random_samples: usize,
    seed: u64,
    tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = match check {
        "identity" => CheckKind::Identity,
        "functional" => CheckKind::Functional,
        "differential" => CheckKind::Differential,
        "tangency" => CheckKind::Tangency,
        other => {
            return Err(value_error(format!(
                "unknown check `{other}`; expected identity, functional, differential or tangency"
            )))
        }
    };
    let plan = SamplePlan {
        region: SampleRegion::new(center, radius),
        grid_density,
        random_samples,
        seed,
    };
    let report = verify::grid_report(kind, section.inner.as_ref(), &plan, tolerance);
    report_to_py(py, report)
}

/// Sup-norm disagreement of two sections over a sample grid.
#[pyfunction]
#[pyo3(signature = (
    a, b, center, radius,
    grid_density = 5, random_samples = 0, seed = 42, tolerance = 1e-6,
))]
#[allow(clippy::too_many_arguments)]
fn section_agreement<'py>(
    py: Python<'py>,
    a: PyRef<'_, PySection>,
    b: PyRef<'_, PySection>,
    center: Vec<f64>,
    radius: f64,
    grid_density: usize,
    random_samples: usize,
    seed: u64,
    tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let plan = SamplePlan {
        region: SampleRegion::new(center, radius),
        grid_density,
        random_samples,
        seed,
    };
    let report = verify::section_agreement_report(
        "agreement",
        a.inner.as_ref(),
        b.inner.as_ref(),
        &plan,
        tolerance,
    );
    report_to_py(py, report)
}

/// Parse an expression; returns its fully parenthesized form.
#[pyfunction]
fn parse_expression(text: &str) -> PyResult<String> {
    expr::parse(text)
        .map(|ast| ast.to_string())
        .map_err(value_error)
}

/// Evaluate an expression with g/h/x variable bindings.
#[pyfunction]
#[pyo3(signature = (text, g = vec![], h = vec![], x = vec![]))]
fn evaluate_expression(text: &str, g: Vec<f64>, h: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
    let ast = expr::parse(text).map_err(value_error)?;
    let bindings = expr::Bindings {
        g: &g,
        h: &h,
        x: &x,
    };
    expr::evaluate(&ast, &bindings).map_err(value_error)
}

#[pymodule]
fn liesect_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGroupChart>()?;
    m.add_class::<PyFibrationChart>()?;
    m.add_class::<PySection>()?;
    m.add_function(wrap_pyfunction!(build_section, m)?)?;
    m.add_function(wrap_pyfunction!(exp_left_invariant, m)?)?;
    m.add_function(wrap_pyfunction!(reference_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(reference_triangular, m)?)?;
    m.add_function(wrap_pyfunction!(reference_affine_nonsolution, m)?)?;
    m.add_function(wrap_pyfunction!(closure_check, m)?)?;
    m.add_function(wrap_pyfunction!(transversality_check, m)?)?;
    m.add_function(wrap_pyfunction!(structure_constants, m)?)?;
    m.add_function(wrap_pyfunction!(functional_residual, m)?)?;
    m.add_function(wrap_pyfunction!(identity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(differential_residual, m)?)?;
    m.add_function(wrap_pyfunction!(tangency_residual, m)?)?;
    m.add_function(wrap_pyfunction!(grid_report, m)?)?;
    m.add_function(wrap_pyfunction!(section_agreement, m)?)?;
    m.add_function(wrap_pyfunction!(parse_expression, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_expression, m)?)?;
    Ok(())
}
