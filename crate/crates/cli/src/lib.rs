//! Front end for classifying, solving, sweeping and verifying radial
//! p-Laplace systems described by TOML run configurations.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use plap_core::solver::{blowup_envelope_check, BlowUpDiagnostics, EnvelopeReport, Point};
use plap_core::verify::{self, InequalityReport, SANDWICH_SAMPLES, SANDWICH_SLACK};
use plap_core::{
    classify::AgreementReport, criteria::criterion, march, numeric_classify, predict, reconcile, BoundaryClass,
    ConvergenceVerdict, CriterionKind, Method, Omega, RadialSolution, Termination, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{load_config, parse_config, ConfigError, ProblemConfig, RunConfig, SolverConfig};

/// Residuals are compared on `[RESIDUAL_WINDOW_START, RESIDUAL_WINDOW_END·r_end]`.
pub const RESIDUAL_WINDOW_START: f64 = 0.01;
pub const RESIDUAL_WINDOW_END: f64 = 0.9;
/// Random sample radii added to the fixed sandwich samples.
pub const RANDOM_SANDWICH_SAMPLES: usize = 25;

pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Trajectory { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Trajectory { .. } => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Shortest round-trip decimal, switching to exponent form outside `[1e-4, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionJson {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_exponent: Option<f64>,
    pub method: Method,
    pub exponent: f64,
}

impl From<ConvergenceVerdict> for CriterionJson {
    fn from(v: ConvergenceVerdict) -> Self {
        Self {
            verdict: v.verdict,
            value: v.value,
            divergence_exponent: v.divergence_exponent,
            method: v.method,
            exponent: v.exponent,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub spec: ProblemConfig,
    pub theta: Option<f64>,
    pub delta: Option<f64>,
    pub k1: f64,
    pub k2: f64,
    pub criterion_unweighted: Option<CriterionJson>,
    pub criterion_weighted: Option<CriterionJson>,
    pub predicted_class: BoundaryClass,
    pub notes: Vec<String>,
}

pub fn classify_problem(problem: &ProblemConfig) -> Result<ClassifyReport, plap_core::SpecError> {
    let spec = problem.spec()?;
    let mut notes = Vec::new();
    let pred = predict(&spec, problem.omega);
    if let Some(note) = &pred.details.note {
        notes.push(note.clone());
    }
    let (mut unweighted, mut weighted) = (None, None);
    if spec.admits_solutions() {
        for (kind, slot) in [(CriterionKind::Unweighted, &mut unweighted), (CriterionKind::Weighted, &mut weighted)] {
            match criterion(&spec, kind) {
                Ok(v) => *slot = Some(CriterionJson::from(v)),
                Err(e) => notes.push(format!("{kind:?} criterion: {e}")),
            }
        }
    }
    Ok(ClassifyReport {
        spec: problem.clone(),
        theta: spec.theta().ok(),
        delta: spec.delta().ok(),
        k1: spec.k1(),
        k2: spec.k2(),
        criterion_unweighted: unweighted,
        criterion_weighted: weighted,
        predicted_class: pred.class,
        notes,
    })
}

pub fn cmd_classify(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = classify_problem(&cfg.problem).map_err(|e| spec_config_error(e))?;
    write_json(out, &report, Path::new("<stdout>"))?;
    Ok(0)
}

fn spec_config_error(e: plap_core::SpecError) -> CliError {
    CliError::Config(ConfigError {
        path: PathBuf::from("[problem]"),
        issues: vec![config::ConfigIssue {
            line: None,
            message: e.to_string(),
        }],
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    writeln!(out, "{text}").map_err(io_error(path))
}

/// Fixed sandwich radii followed by log-uniform samples on `[10⁻³, 10³]`.
pub fn sandwich_samples(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = SANDWICH_SAMPLES.to_vec();
    samples.extend((0..RANDOM_SANDWICH_SAMPLES).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))));
    samples
}

/// The trajectory checks followed by the sandwich check on seeded samples.
pub fn verify_reports(sol: &RadialSolution, seed: u64) -> Vec<InequalityReport> {
    let mut reports = vec![
        verify::check_monotone(sol),
        verify::check_convexity_bounds(sol),
        verify::check_uprime_estimate(sol),
        verify::check_no_u_only_blowup(sol),
    ];
    let sandwich = verify::check_sandwich(sol.spec.h(), sol.spec.p(), &sandwich_samples(seed)).unwrap_or(InequalityReport {
        name: "sandwich".into(),
        points_checked: 0,
        max_relative_violation: f64::INFINITY,
        worst_at: None,
        slack: SANDWICH_SLACK,
        pass: false,
    });
    reports.push(sandwich);
    reports
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualSummary {
    pub window: (f64, f64),
    pub points: usize,
    pub max_abs_eq1: f64,
    pub max_abs_eq2: f64,
}

/// Sup-norm of the equation residuals over the residual window.
pub fn residual_summary(sol: &RadialSolution, res1: &[f64], res2: &[f64]) -> ResidualSummary {
    let window = (RESIDUAL_WINDOW_START, RESIDUAL_WINDOW_END * sol.r_end());
    let mut s = ResidualSummary {
        window,
        points: 0,
        max_abs_eq1: 0.0,
        max_abs_eq2: 0.0,
    };
    for i in 0..sol.len() {
        let r = sol.r[i];
        if r < window.0 || r > window.1 {
            continue;
        }
        s.points += 1;
        let (a, b) = (res1[i].abs(), res2[i].abs());
        s.max_abs_eq1 = if a.is_nan() { f64::INFINITY } else { s.max_abs_eq1.max(a) };
        s.max_abs_eq2 = if b.is_nan() { f64::INFINITY } else { s.max_abs_eq2.max(b) };
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub spec: ProblemConfig,
    pub solver: SolverConfig,
    pub seed: u64,
    pub termination: Option<Termination>,
    #[serde(rename = "R0")]
    pub r0: Option<f64>,
    pub r_end: Option<f64>,
    pub points: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub end_state: Option<Point>,
    pub blowup: Option<BlowUpDiagnostics>,
    pub predicted_class: BoundaryClass,
    pub numeric_class: Option<BoundaryClass>,
    pub reconcile: Option<AgreementReport>,
    pub verify: Vec<InequalityReport>,
    pub envelope: Option<EnvelopeReport>,
    pub residuals: Option<ResidualSummary>,
    pub note: Option<String>,
    pub error: Option<String>,
}

/// A solve together with its report and residual columns.
pub struct SolveOutcome {
    pub solution: Option<RadialSolution>,
    pub residuals: (Vec<f64>, Vec<f64>),
    pub report: SolveReport,
}

pub fn solve_problem(problem: &ProblemConfig, solver: &SolverConfig, seed: u64) -> Result<SolveOutcome, plap_core::SpecError> {
    let spec = problem.spec()?;
    let pred = predict(&spec, problem.omega);
    let mut report = SolveReport {
        spec: problem.clone(),
        solver: *solver,
        seed,
        termination: None,
        r0: None,
        r_end: None,
        points: 0,
        accepted_steps: 0,
        rejected_steps: 0,
        end_state: None,
        blowup: None,
        predicted_class: pred.class,
        numeric_class: None,
        reconcile: None,
        verify: Vec::new(),
        envelope: None,
        residuals: None,
        note: None,
        error: None,
    };
    let sol = match march(&spec, solver.u0, solver.v0, &solver.options()) {
        Ok(sol) => sol,
        Err(e) => {
            report.error = Some(e.to_string());
            return Ok(SolveOutcome {
                solution: None,
                residuals: (Vec::new(), Vec::new()),
                report,
            });
        }
    };
    let numeric = numeric_classify(&sol, problem.omega);
    let (res1, res2) = verify::equation_residuals(&sol);
    report.termination = Some(sol.terminated);
    report.r0 = sol.r0;
    report.r_end = Some(sol.r_end());
    report.points = sol.len();
    report.accepted_steps = sol.accepted_steps;
    report.rejected_steps = sol.rejected_steps;
    report.end_state = Some(sol.end_state);
    report.blowup = sol.blowup.clone();
    report.numeric_class = Some(numeric.class);
    report.reconcile = Some(reconcile(&pred, &numeric));
    report.verify = verify_reports(&sol, seed);
    report.envelope = blowup_envelope_check(&sol).ok();
    report.residuals = Some(residual_summary(&sol, &res1, &res2));
    report.note = sol.note.clone();
    Ok(SolveOutcome {
        solution: Some(sol),
        residuals: (res1, res2),
        report,
    })
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["r", "u", "v", "du", "dv", "res_eq1", "res_eq2"];

pub fn write_trajectory(path: &Path, sol: &RadialSolution, res1: &[f64], res2: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record(TRAJECTORY_HEADER).map_err(csv_error(path))?;
    for i in 0..sol.len() {
        let row = [sol.r[i], sol.u[i], sol.v[i], sol.w[i], sol.dv[i], res1[i], res2[i]].map(fmt_f64);
        w.write_record(&row).map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// Reads the `r,u,v,du,dv` columns of a trajectory file.
pub fn read_trajectory(path: &Path, problem: &ProblemConfig, threshold: f64) -> Result<RadialSolution, CliError> {
    let bad = |message: String| CliError::Trajectory {
        path: path.to_path_buf(),
        message,
    };
    let mut rd = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let headers = rd.headers().map_err(csv_error(path))?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(["r", "u", "v", "du", "dv"]) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column `{name}`")))?;
    }
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (line, record) in rd.records().enumerate() {
        let record = record.map_err(csv_error(path))?;
        for (c, &j) in idx.iter().enumerate() {
            let field = record.get(j).unwrap_or("");
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: column `{}` is not a number: {field:?}", line + 2, headers.get(j).unwrap_or("?"))))?;
            cols[c].push(x);
        }
    }
    if cols[0].len() < 2 {
        return Err(bad("need at least two rows".into()));
    }
    let spec = problem.spec().map_err(|e| bad(e.to_string()))?;
    let [r, u, v, w, dv] = cols;
    let terminated = if v.last().is_some_and(|&x| x > threshold) {
        Termination::BlowUp
    } else {
        Termination::ReachedTarget
    };
    Ok(RadialSolution::from_columns(spec, r, u, v, w, dv, terminated, threshold))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))
}

/// Writes `trajectory.csv` and `report.json` into `out_dir`.
pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path) -> Result<i32, CliError> {
    let outcome = solve_problem(&cfg.problem, &cfg.solver, cfg.seed).map_err(spec_config_error)?;
    create_dir(out_dir)?;
    let traj = out_dir.join("trajectory.csv");
    match &outcome.solution {
        Some(sol) => write_trajectory(&traj, sol, &outcome.residuals.0, &outcome.residuals.1)?,
        None => {
            let mut w = csv::Writer::from_path(&traj).map_err(csv_error(&traj))?;
            w.write_record(TRAJECTORY_HEADER).map_err(csv_error(&traj))?;
            w.flush().map_err(io_error(&traj))?;
        }
    }
    let path = out_dir.join("report.json");
    let mut file = std::fs::File::create(&path).map_err(io_error(&path))?;
    write_json(&mut file, &outcome.report, &path)?;
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub source: String,
    pub seed: u64,
    pub termination: Option<Termination>,
    pub reports: Vec<InequalityReport>,
    pub pass: bool,
    pub error: Option<String>,
}

/// Runs the verification suite on a fresh solve or on a trajectory file.
pub fn cmd_verify(cfg: &RunConfig, trajectory: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = match trajectory {
        Some(path) => {
            let sol = read_trajectory(path, &cfg.problem, cfg.solver.blowup_threshold)?;
            let reports = verify_reports(&sol, cfg.seed);
            VerifyReport {
                source: path.display().to_string(),
                seed: cfg.seed,
                termination: None,
                pass: reports.iter().all(|r| r.pass),
                reports,
                error: None,
            }
        }
        None => {
            let outcome = solve_problem(&cfg.problem, &cfg.solver, cfg.seed).map_err(spec_config_error)?;
            let r = outcome.report;
            VerifyReport {
                source: "solve".into(),
                seed: cfg.seed,
                termination: r.termination,
                pass: r.error.is_none() && r.verify.iter().all(|x| x.pass),
                reports: r.verify,
                error: r.error,
            }
        }
    };
    write_json(out, &report, Path::new("<stdout>"))?;
    Ok(if report.pass { 0 } else { EXIT_FAILED_CHECK })
}

/// One atlas row; empty cells mean "not applicable".
#[derive(Debug, Clone, Default)]
pub struct AtlasRow {
    pub cells: Vec<String>,
}

fn atlas_header(cfg: &RunConfig, solve: bool) -> Vec<String> {
    let mut h: Vec<String> = ["row", "p", "alpha", "n", "f1", "f2", "g1", "g2", "h", "omega", "u0", "v0"]
        .map(String::from)
        .to_vec();
    h.extend(cfg.sweep.iter().map(|a| format!("sweep_{}", a.param.name())));
    h.extend(
        [
            "theta",
            "delta",
            "k1",
            "k2",
            "unweighted",
            "unweighted_exponent",
            "unweighted_value",
            "weighted",
            "weighted_exponent",
            "weighted_value",
            "predicted_class",
        ]
        .map(String::from),
    );
    if solve {
        h.extend(
            ["termination", "R0", "numeric_class", "agree", "w_tail_exponent", "max_residual", "verify_pass"].map(String::from),
        );
    }
    h.push("error".into());
    h
}

fn atlas_row(index: usize, point: &config::SweepPoint, solve: bool, seed: u64) -> AtlasRow {
    let pr = &point.problem;
    let omega = match pr.omega {
        Omega::Ball => "ball",
        Omega::WholeSpace => "wholespace",
    };
    let mut cells = vec![
        index.to_string(),
        fmt_f64(pr.p),
        fmt_f64(pr.alpha),
        pr.n.to_string(),
        pr.f1.clone(),
        pr.f2.clone(),
        pr.g1.clone(),
        pr.g2.clone(),
        pr.h.clone(),
        omega.to_string(),
        fmt_f64(point.solver.u0),
        fmt_f64(point.solver.v0),
    ];
    cells.extend(point.assignments.iter().map(|&(_, x)| fmt_f64(x)));
    let derived = 11 + if solve { 7 } else { 0 };
    let report = match classify_problem(pr) {
        Ok(r) => r,
        Err(e) => {
            cells.extend(std::iter::repeat_n(String::new(), derived));
            cells.push(e.to_string());
            return AtlasRow { cells };
        }
    };
    let verdict = |c: &Option<CriterionJson>| -> [String; 3] {
        match c {
            Some(c) => [format!("{:?}", c.verdict), fmt_f64(c.exponent), fmt_opt(c.value)],
            None => Default::default(),
        }
    };
    cells.extend([fmt_opt(report.theta), fmt_opt(report.delta), fmt_f64(report.k1), fmt_f64(report.k2)]);
    cells.extend(verdict(&report.criterion_unweighted));
    cells.extend(verdict(&report.criterion_weighted));
    cells.push(report.predicted_class.to_string());
    let mut error = String::new();
    if solve {
        let admits = pr.spec().map(|s| s.admits_solutions()).unwrap_or(false);
        if !admits {
            cells.extend(std::iter::repeat_n(String::new(), 7));
        } else {
            let outcome = solve_problem(pr, &point.solver, seed).expect("spec validated above");
            let r = &outcome.report;
            cells.push(r.termination.map(|t| format!("{t:?}")).unwrap_or_default());
            cells.push(fmt_opt(r.r0));
            cells.push(r.numeric_class.map(|c| c.to_string()).unwrap_or_default());
            cells.push(r.reconcile.as_ref().map(|a| a.agree.to_string()).unwrap_or_default());
            cells.push(fmt_opt(r.blowup.as_ref().map(|b| b.w_tail_exponent)));
            cells.push(fmt_opt(r.residuals.map(|s| s.max_abs_eq1.max(s.max_abs_eq2))));
            cells.push(if r.verify.is_empty() { String::new() } else { r.verify.iter().all(|x| x.pass).to_string() });
            if let Some(e) = &r.error {
                error = e.clone();
            }
        }
    }
    cells.push(error);
    AtlasRow { cells }
}

/// Evaluates every sweep point concurrently and returns the rows in sweep order.
pub fn sweep_rows(cfg: &RunConfig, solve: bool) -> Vec<AtlasRow> {
    let points = cfg.sweep_points();
    points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| atlas_row(i, pt, solve, cfg.seed))
        .collect()
}

pub fn write_atlas(out: &mut dyn Write, cfg: &RunConfig, rows: &[AtlasRow], solve: bool) -> Result<(), CliError> {
    let path = Path::new("<atlas>");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(atlas_header(cfg, solve)).map_err(csv_error(path))?;
    for row in rows {
        w.write_record(&row.cells).map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// Writes the atlas to `out_dir/atlas.csv`, or to `out` when no directory is given.
pub fn cmd_sweep(cfg: &RunConfig, solve: bool, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let rows = sweep_rows(cfg, solve);
    match out_dir {
        Some(dir) => {
            create_dir(dir)?;
            let path = dir.join("atlas.csv");
            let mut file = std::fs::File::create(&path).map_err(io_error(&path))?;
            write_atlas(&mut file, cfg, &rows, solve)?;
        }
        None => write_atlas(out, cfg, &rows, solve)?,
    }
    Ok(0)
}
