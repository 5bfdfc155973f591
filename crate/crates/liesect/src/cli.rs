//! Command-line surface: `check`, `bracket`, `subalgebra`, `solve`,
//! `verify` and the built-in `demo` runs. Text reports go to stdout, JSON
//! to `--output`; exit codes are 0 (pass), 1 (verification failure),
//! 2 (configuration or usage error), 3 (numerical failure).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::algebra::{self, AlgebraFrame, DEFAULT_CLOSURE_TOL};
use crate::config::{self, ConfigError, ProblemConfig, VerifySettings};
use crate::group::{FibrationChart, GroupChart, RANK_TOL};
use crate::numeric;
use crate::solver::{
    build_section, build_section_ode, reference, PathStrategy, Section, SectionField,
    SolveError, SolverParams, SolverRoute,
};
use crate::verify::{
    grid_report, section_agreement_report, CheckKind, ResidualReport, SamplePlan, SampleRegion,
    DIFFERENTIAL_TOL, PATH_INDEPENDENCE_TOL, TANGENCY_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser)]
#[command(
    name = "liesect",
    version,
    about = "Solve local Lie group section equations and verify the solutions numerically"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// Problem configuration file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the main verification tolerance.
    #[arg(long, global = true, value_name = "REAL")]
    tol: Option<f64>,
    /// Override the sampling seed (also: LIESECT_SEED).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Section construction route.
    #[arg(long, global = true, value_enum, value_name = "exp|ode")]
    method: Option<MethodArg>,
    /// Write the JSON report to this path (CSV for `solve` when it ends
    /// in .csv).
    #[arg(long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Override the per-axis grid density.
    #[arg(long, global = true, value_name = "INT")]
    grid: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exp,
    Ode,
}

impl From<MethodArg> for SolverRoute {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Exp => SolverRoute::Exp,
            MethodArg::Ode => SolverRoute::Ode,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the group axioms and the fibration rank.
    Check,
    /// Structure constants of the configured frame under the bracket.
    Bracket,
    /// Closure and transversality of the configured frame.
    Subalgebra,
    /// Build the section and emit samples over the verification region.
    Solve,
    /// Run the full residual suite on the configured problem.
    Verify,
    /// Built-in end-to-end demonstrations.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// The exponential equation on the abelian builtin.
    Exp {
        /// Rate of the reproduced solution.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Also run the residual suite.
        #[arg(long)]
        verify: bool,
    },
    /// The matrix equation on the triangular-affine builtin.
    Triangular {
        /// Scale rate of the reproduced solution.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Also run the residual suite.
        #[arg(long)]
        verify: bool,
    },
}

enum CliFailure {
    Config(String),
    Numeric(String),
}

impl CliFailure {
    fn category(&self) -> &'static str {
        match self {
            CliFailure::Config(_) => "config",
            CliFailure::Numeric(_) => "numeric",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliFailure::Config(m) | CliFailure::Numeric(m) => m,
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliFailure::Config(_) => EXIT_CONFIG,
            CliFailure::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<ConfigError> for CliFailure {
    fn from(err: ConfigError) -> Self {
        CliFailure::Config(err.to_string())
    }
}

impl From<SolveError> for CliFailure {
    fn from(err: SolveError) -> Self {
        CliFailure::Numeric(err.to_string())
    }
}

impl From<crate::group::GroupError> for CliFailure {
    fn from(err: crate::group::GroupError) -> Self {
        CliFailure::Numeric(err.to_string())
    }
}

impl From<crate::algebra::AlgebraError> for CliFailure {
    fn from(err: crate::algebra::AlgebraError) -> Self {
        CliFailure::Numeric(err.to_string())
    }
}

/// Run the CLI against explicit writers; the binary wires this to the real
/// stdout and stderr. Returns the process exit code.
pub fn run_command<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{err}");
                    EXIT_OK
                }
                _ => {
                    let text = err.to_string();
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    let _ = writeln!(stderr, "liesect: error[usage]: {first}");
                    EXIT_CONFIG
                }
            };
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(failure) => {
            let message = failure.message().replace('\n', " ");
            let _ = writeln!(
                stderr,
                "liesect: error[{}]: {}",
                failure.category(),
                message
            );
            failure.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, CliFailure> {
    match &cli.command {
        Command::Check => run_check(&load_problem(&cli.common)?, &cli.common, stdout),
        Command::Bracket => run_bracket(&load_problem(&cli.common)?, &cli.common, stdout),
        Command::Subalgebra => run_subalgebra(&load_problem(&cli.common)?, &cli.common, stdout),
        Command::Solve => run_solve(&load_problem(&cli.common)?, &cli.common, stdout),
        Command::Verify => run_verify(&load_problem(&cli.common)?, &cli.common, stdout),
        Command::Demo { which } => match which {
            DemoCommand::Exp { k, verify } => run_demo_exp(*k, *verify, &cli.common, stdout),
            DemoCommand::Triangular { k, verify } => {
                run_demo_triangular(*k, *verify, &cli.common, stdout)
            }
        },
    }
}

fn load_problem(common: &CommonArgs) -> Result<ProblemConfig, CliFailure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliFailure::Config("missing --config PATH".into()))?;
    let mut problem = config::load_config(path)?;
    problem.verify = effective_verify(problem.verify, common)?;
    if let Some(method) = common.method {
        problem.route = method.into();
    }
    Ok(problem)
}

/// Seed precedence: config < LIESECT_SEED < --seed.
fn effective_verify(
    mut settings: VerifySettings,
    common: &CommonArgs,
) -> Result<VerifySettings, CliFailure> {
    if let Ok(text) = std::env::var("LIESECT_SEED") {
        settings.seed = text.trim().parse().map_err(|_| {
            CliFailure::Config(format!(
                "LIESECT_SEED must be an unsigned integer, got `{text}`"
            ))
        })?;
    }
    if let Some(seed) = common.seed {
        settings.seed = seed;
    }
    if let Some(tol) = common.tol {
        let tol_ok = tol > 0.0 && tol.is_finite();
        if !tol_ok {
            return Err(CliFailure::Config(format!(
                "--tol must be positive and finite, got {tol}"
            )));
        }
        settings.tolerance = tol;
    }
    if let Some(grid) = common.grid {
        if grid == 0 {
            return Err(CliFailure::Config("--grid must be at least 1".into()));
        }
        settings.grid_density = grid;
    }
    Ok(settings)
}

fn write_json_output(
    common: &CommonArgs,
    value: &serde_json::Value,
) -> Result<(), CliFailure> {
    if let Some(path) = &common.output {
        let text = format!("{}\n", serde_json::to_string_pretty(value).expect("json"));
        std::fs::write(path, text).map_err(|e| {
            CliFailure::Config(format!("cannot write `{}`: {e}", path.display()))
        })?;
    }
    Ok(())
}

fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: Vec<String>, widths: &[usize]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                line.push_str(&format!("{:<width$}", cell, width = widths[i]));
            } else {
                line.push_str(&format!("  {:>width$}", cell, width = widths[i]));
            }
        }
        line.push('\n');
        line
    };
    out.push_str(&render_row(
        headers.iter().map(|h| h.to_string()).collect(),
        &widths,
    ));
    for row in rows {
        out.push_str(&render_row(row.clone(), &widths));
    }
    out
}

fn render_residual_reports(reports: &[ResidualReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.check.clone(),
                r.samples.to_string(),
                format!("{:.3e}", r.max_residual),
                format!("{:.3e}", r.mean_residual),
                format!("{:.1e}", r.tolerance),
                r.failures.len().to_string(),
                if r.passed() { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    render_table(
        &[
            "check",
            "samples",
            "max_residual",
            "mean_residual",
            "tolerance",
            "failures",
            "status",
        ],
        &rows,
    )
}

#[derive(Debug, Clone, Serialize)]
struct AxiomRow {
    name: String,
    samples: usize,
    value: f64,
    threshold: f64,
    /// Pass when the value is at most the threshold; otherwise when it
    /// exceeds it (rank checks).
    pass_if_below: bool,
    passed: bool,
}

impl AxiomRow {
    fn below(name: &str, samples: usize, value: f64, threshold: f64) -> Self {
        AxiomRow {
            name: name.into(),
            samples,
            value,
            threshold,
            pass_if_below: true,
            passed: value <= threshold,
        }
    }

    fn above(name: &str, samples: usize, value: f64, threshold: f64) -> Self {
        AxiomRow {
            name: name.into(),
            samples,
            value,
            threshold,
            pass_if_below: false,
            passed: value > threshold,
        }
    }
}

fn render_axiom_rows(rows: &[AxiomRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.samples.to_string(),
                format!("{:.3e}", r.value),
                format!("{} {:.1e}", if r.pass_if_below { "<=" } else { ">" }, r.threshold),
                if r.passed { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    render_table(&["check", "samples", "value", "requirement", "status"], &cells)
}

fn run_check(
    problem: &ProblemConfig,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    let group = &problem.group;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.verify.seed);
    let radius = 0.8 * group.domain_radius();
    let sample = |rng: &mut ChaCha8Rng, radius: f64| -> Vec<f64> {
        group
            .identity()
            .iter()
            .map(|e| e + rng.random_range(-radius..=radius))
            .collect()
    };

    let mut identity_worst = 0.0_f64;
    for _ in 0..50 {
        let g = sample(&mut rng, radius);
        let right = group.mu(&g, group.identity())?;
        let left = group.mu(group.identity(), &g)?;
        identity_worst = identity_worst
            .max(numeric::diff_inf_norm(&right, &g))
            .max(numeric::diff_inf_norm(&left, &g));
    }

    let mut assoc_worst = 0.0_f64;
    for _ in 0..50 {
        let a = sample(&mut rng, radius);
        let b = sample(&mut rng, radius);
        let c = sample(&mut rng, radius);
        let ab_c = group.mu(&group.mu(&a, &b)?, &c)?;
        let a_bc = group.mu(&a, &group.mu(&b, &c)?)?;
        assoc_worst = assoc_worst.max(numeric::diff_inf_norm(&ab_c, &a_bc));
    }

    let mut inverse_worst = 0.0_f64;
    for _ in 0..20 {
        let g = sample(&mut rng, radius.min(0.3));
        let inv = group.inverse(&g)?;
        let product = group.mu(&g, &inv)?;
        inverse_worst = inverse_worst.max(numeric::diff_inf_norm(&product, group.identity()));
    }

    let dp = problem.fibration.dp(group, group.identity())?;
    let rank_smin = numeric::min_singular_value(&dp);

    let rows = vec![
        AxiomRow::below("identity_law", 50, identity_worst, 1e-12),
        AxiomRow::below("associativity", 50, assoc_worst, 1e-10),
        AxiomRow::below("inverse_round_trip", 20, inverse_worst, 1e-9),
        AxiomRow::above("fibration_submersion", 1, rank_smin, RANK_TOL),
    ];
    let passed = rows.iter().all(|r| r.passed);
    let _ = write!(stdout, "{}", render_axiom_rows(&rows));
    write_json_output(
        common,
        &json!({
            "command": "check",
            "seed": problem.verify.seed,
            "checks": rows,
            "passed": passed,
        }),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
}

fn run_bracket(
    problem: &ProblemConfig,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    let pairs = algebra::structure_constants(&problem.group, &problem.frame)?;
    let rows: Vec<Vec<String>> = pairs
        .iter()
        .map(|p| {
            vec![
                format!("[F{}, F{}]", p.i + 1, p.j + 1),
                p.coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, c)| format!("{:+.6} F{}", c, k + 1))
                    .collect::<Vec<_>>()
                    .join(" "),
                format!("{:.3e}", p.off_span_residual),
            ]
        })
        .collect();
    let _ = write!(
        stdout,
        "{}",
        render_table(&["pair", "in-frame expansion", "off-span residual"], &rows)
    );
    write_json_output(
        common,
        &json!({
            "command": "bracket",
            "pairs": pairs,
        }),
    )?;
    Ok(EXIT_OK)
}

fn run_subalgebra(
    problem: &ProblemConfig,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    let closure_tol = common.tol.unwrap_or(DEFAULT_CLOSURE_TOL);
    let closure = algebra::closure_check(&problem.group, &problem.frame, closure_tol)?;
    let transversality =
        algebra::transversality_check(&problem.group, &problem.fibration, &problem.frame)?;
    let rows = vec![
        AxiomRow::below(
            "closure",
            problem.frame.len() * (problem.frame.len().saturating_sub(1)) / 2,
            closure.max_residual,
            closure_tol,
        ),
        AxiomRow::above(
            "transversality",
            1,
            transversality.smallest_singular_value,
            RANK_TOL,
        ),
    ];
    let passed = closure.is_subalgebra && transversality.is_transversal;
    let _ = write!(stdout, "{}", render_axiom_rows(&rows));
    write_json_output(
        common,
        &json!({
            "command": "subalgebra",
            "closure": closure,
            "transversality": transversality,
            "passed": passed,
        }),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
}

fn run_solve(
    problem: &ProblemConfig,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    let group = Arc::new(problem.group.clone());
    let fibration = Arc::new(problem.fibration.clone());
    let section = build_section(
        Arc::clone(&group),
        Arc::clone(&fibration),
        problem.frame.clone(),
        problem.solver,
        problem.route,
    )?;
    let region = SampleRegion::new(
        fibration.base_point().to_vec(),
        problem.verify.region_radius,
    );
    let plan = SamplePlan {
        region,
        grid_density: problem.verify.grid_density,
        random_samples: 0,
        seed: problem.verify.seed,
    };
    let mut samples = Vec::new();
    let mut outside_domain = 0usize;
    for x in plan.region.grid_points(plan.grid_density) {
        let sigma = section.evaluate(&x)?;
        if !group.in_domain(&sigma) {
            outside_domain += 1;
        }
        samples.push((x, sigma));
    }
    let is_csv = common
        .output
        .as_ref()
        .and_then(|p| p.extension())
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if let Some(path) = &common.output {
        let text = if is_csv {
            render_solve_csv(&samples, group.dim(), fibration.base_dim())
        } else {
            format!(
                "{}\n",
                serde_json::to_string_pretty(&solve_json(problem, &samples, outside_domain))
                    .expect("json")
            )
        };
        std::fs::write(path, text).map_err(|e| {
            CliFailure::Config(format!("cannot write `{}`: {e}", path.display()))
        })?;
        let _ = writeln!(
            stdout,
            "wrote {} section samples to {}",
            samples.len(),
            path.display()
        );
        if outside_domain > 0 {
            let _ = writeln!(
                stdout,
                "warning: {outside_domain} of {} section values lie outside the trust radius {}",
                samples.len(),
                group.domain_radius()
            );
        }
    } else {
        let _ = writeln!(
            stdout,
            "{}",
            serde_json::to_string_pretty(&solve_json(problem, &samples, outside_domain))
                .expect("json")
        );
    }
    Ok(EXIT_OK)
}

fn solve_json(
    problem: &ProblemConfig,
    samples: &[(Vec<f64>, Vec<f64>)],
    outside_domain: usize,
) -> serde_json::Value {
    json!({
        "command": "solve",
        "route": problem.route.to_string(),
        "seed": problem.verify.seed,
        "outside_domain": outside_domain,
        "samples": samples
            .iter()
            .map(|(x, sigma)| json!({"x": x, "sigma": sigma}))
            .collect::<Vec<_>>(),
    })
}

fn render_solve_csv(samples: &[(Vec<f64>, Vec<f64>)], n: usize, m: usize) -> String {
    let mut out = String::new();
    let mut headers = Vec::new();
    for i in 0..m {
        headers.push(format!("x{}", i + 1));
    }
    for i in 0..n {
        headers.push(format!("sigma{}", i + 1));
    }
    out.push_str(&headers.join(","));
    out.push('\n');
    for (x, sigma) in samples {
        let cells: Vec<String> = x.iter().chain(sigma).map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// The full residual suite over the configured verification region:
/// identity, functional, differential, tangency and path independence.
fn residual_suite(
    group: &Arc<GroupChart>,
    fibration: &Arc<FibrationChart>,
    frame: &AlgebraFrame,
    params: SolverParams,
    route: SolverRoute,
    verify: &VerifySettings,
) -> Result<Vec<ResidualReport>, CliFailure> {
    let section = build_section(
        Arc::clone(group),
        Arc::clone(fibration),
        frame.clone(),
        params,
        route,
    )?;
    let plan = SamplePlan {
        region: SampleRegion::new(fibration.base_point().to_vec(), verify.region_radius),
        grid_density: verify.grid_density,
        random_samples: verify.random_samples,
        seed: verify.seed,
    };
    let mut reports = vec![
        grid_report(CheckKind::Identity, &section, &plan, params.newton_tol),
        grid_report(CheckKind::Functional, &section, &plan, verify.tolerance),
        grid_report(CheckKind::Differential, &section, &plan, DIFFERENTIAL_TOL),
        grid_report(CheckKind::Tangency, &section, &plan, TANGENCY_TOL),
    ];
    let straight = build_section_ode(
        Arc::clone(group),
        Arc::clone(fibration),
        frame.clone(),
        SolverParams {
            path_strategy: PathStrategy::StraightLine,
            ..params
        },
    )?;
    let axes = build_section_ode(
        Arc::clone(group),
        Arc::clone(fibration),
        frame.clone(),
        SolverParams {
            path_strategy: PathStrategy::AxisLegs,
            ..params
        },
    )?;
    reports.push(section_agreement_report(
        "path_independence",
        &straight,
        &axes,
        &plan,
        PATH_INDEPENDENCE_TOL,
    ));
    Ok(reports)
}

fn run_verify(
    problem: &ProblemConfig,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    let group = Arc::new(problem.group.clone());
    let fibration = Arc::new(problem.fibration.clone());
    let reports = residual_suite(
        &group,
        &fibration,
        &problem.frame,
        problem.solver,
        problem.route,
        &problem.verify,
    )?;
    let passed = reports.iter().all(|r| r.passed());
    let _ = write!(stdout, "{}", render_residual_reports(&reports));
    write_json_output(
        common,
        &json!({
            "command": "verify",
            "route": problem.route.to_string(),
            "seed": problem.verify.seed,
            "tolerance": problem.verify.tolerance,
            "reports": reports,
            "passed": passed,
        }),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
}

/// Grid-for-grid comparison of a solver section against a closed-form
/// reference.
fn reproduction_report(
    name: &str,
    section: &SectionField,
    oracle: &dyn Section,
    plan: &SamplePlan,
    tolerance: f64,
) -> ResidualReport {
    section_agreement_report(name, section, oracle, plan, tolerance)
}

fn run_demo_exp(
    k: f64,
    with_verify: bool,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    // The demo widens the chart so the reproduction interval [-1, 1] fits,
    // and tightens the step so the integrator error clears the 1e-8 bar.
    let group = Arc::new(GroupChart::abelian_exp().with_domain_radius(1.2));
    let fibration = Arc::new(FibrationChart::from_indices(&group, &[1]).expect("builtin"));
    let frame =
        AlgebraFrame::new(&group, &[vec![k, 1.0]]).map_err(|e| CliFailure::Numeric(e.to_string()))?;
    let params = SolverParams {
        rk4_step: 5e-3,
        ..SolverParams::default()
    };
    let verify_settings = effective_verify(VerifySettings::default(), common)?;
    let oracle = reference::exponential(k);
    let line = SamplePlan {
        region: SampleRegion::new(vec![0.0], 1.0),
        grid_density: 101,
        random_samples: 0,
        seed: verify_settings.seed,
    };
    let mut reports = Vec::new();
    for route in [SolverRoute::Exp, SolverRoute::Ode] {
        let section = build_section(
            Arc::clone(&group),
            Arc::clone(&fibration),
            frame.clone(),
            params,
            route,
        )?;
        reports.push(reproduction_report(
            &format!("reproduction_{route}"),
            &section,
            &oracle,
            &line,
            1e-8,
        ));
    }
    if with_verify {
        let route = common.method.map(Into::into).unwrap_or(SolverRoute::Exp);
        reports.extend(residual_suite(
            &group,
            &fibration,
            &frame,
            params,
            route,
            &verify_settings,
        )?);
    }
    let passed = reports.iter().all(|r| r.passed());
    let _ = write!(stdout, "{}", render_residual_reports(&reports));
    write_json_output(
        common,
        &json!({
            "command": "demo exp",
            "k": k,
            "seed": verify_settings.seed,
            "reports": reports,
            "passed": passed,
        }),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
}

fn run_demo_triangular(
    k: f64,
    with_verify: bool,
    common: &CommonArgs,
    stdout: &mut dyn Write,
) -> Result<i32, CliFailure> {
    let group = Arc::new(GroupChart::triangular_affine());
    let fibration = Arc::new(FibrationChart::from_indices(&group, &[3, 4]).expect("builtin"));
    let frame = AlgebraFrame::new(
        &group,
        &[vec![k, 0.0, k, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]],
    )
    .map_err(|e| CliFailure::Numeric(e.to_string()))?;
    let params = SolverParams::default();
    let verify_settings = effective_verify(VerifySettings::default(), common)?;
    let oracle = reference::triangular_scaled(k);
    let grid = SamplePlan {
        region: SampleRegion::new(vec![0.0, 0.0], 0.3),
        grid_density: 9,
        random_samples: 0,
        seed: verify_settings.seed,
    };
    let mut reports = Vec::new();
    let mut functional_section = None;
    for route in [SolverRoute::Exp, SolverRoute::Ode] {
        let section = build_section(
            Arc::clone(&group),
            Arc::clone(&fibration),
            frame.clone(),
            params,
            route,
        )?;
        reports.push(reproduction_report(
            &format!("reproduction_{route}"),
            &section,
            &oracle,
            &grid,
            1e-7,
        ));
        if route == SolverRoute::Exp {
            functional_section = Some(section);
        }
    }
    // 50 seeded random pairs against the functional equation.
    let pairs_plan = SamplePlan {
        region: SampleRegion::new(vec![0.0, 0.0], 0.3),
        grid_density: 1,
        random_samples: 50,
        seed: verify_settings.seed,
    };
    reports.push(grid_report(
        CheckKind::Functional,
        functional_section.as_ref().expect("exp section built"),
        &pairs_plan,
        1e-7,
    ));
    if with_verify {
        let route = common.method.map(Into::into).unwrap_or(SolverRoute::Exp);
        reports.extend(residual_suite(
            &group,
            &fibration,
            &frame,
            params,
            route,
            &verify_settings,
        )?);
    }
    let passed = reports.iter().all(|r| r.passed());
    let _ = write!(stdout, "{}", render_residual_reports(&reports));
    write_json_output(
        common,
        &json!({
            "command": "demo triangular",
            "k": k,
            "seed": verify_settings.seed,
            "reports": reports,
            "passed": passed,
        }),
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_VERIFICATION_FAILED })
}
