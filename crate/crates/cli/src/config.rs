//! Run configuration files.
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! p = 2
//! alpha = 0
//! n = 3
//! f1 = "1"
//! f2 = "1"
//! g1 = "t"
//! g2 = "1"
//! h = "t^6"
//! omega = "ball"          # or "wholespace"
//!
//! [solver]                # every key optional
//! u0 = 1
//! v0 = 1
//! target_radius = 50
//! blowup_threshold = 1e8
//! rel_tol = 1e-8
//!
//! [sweep]                 # optional; axes combine as a cartesian product
//! q = [1, 2, 3]
//! parameter = "m"         # single-axis form
//! values = [1, 2]
//! ```
//!
//! Sweep axes `m`, `beta` and `q` replace `g1`, `g2` and `h` by `t^m`,
//! `t^beta` and `t^q`; `alpha_frac` sets `alpha = alpha_frac·(p − 1)`.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use plap_core::{Omega, ProblemSpec, SpecError};
use serde::Serialize;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub p: f64,
    pub alpha: f64,
    pub n: u32,
    pub f1: String,
    pub f2: String,
    pub g1: String,
    pub g2: String,
    pub h: String,
    #[serde(serialize_with = "omega_name")]
    pub omega: Omega,
}

fn omega_name<S: serde::Serializer>(omega: &Omega, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match omega {
        Omega::Ball => "ball",
        Omega::WholeSpace => "wholespace",
    })
}

impl ProblemConfig {
    pub fn spec(&self) -> Result<ProblemSpec, SpecError> {
        ProblemSpec::from_strs(self.p, self.alpha, self.n, [&self.f1, &self.f2, &self.g1, &self.g2, &self.h])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub u0: f64,
    pub v0: f64,
    pub target_radius: f64,
    pub blowup_threshold: f64,
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            u0: 1.0,
            v0: 1.0,
            target_radius: 50.0,
            blowup_threshold: 1e8,
            rel_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> plap_core::SolverOptions {
        plap_core::SolverOptions::new(self.target_radius)
            .with_threshold(self.blowup_threshold)
            .with_rel_tol(self.rel_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SweepParam {
    P,
    Alpha,
    AlphaFrac,
    N,
    M,
    Beta,
    Q,
    U0,
    V0,
}

impl SweepParam {
    pub const ALL: [SweepParam; 9] = [
        SweepParam::P,
        SweepParam::Alpha,
        SweepParam::AlphaFrac,
        SweepParam::N,
        SweepParam::M,
        SweepParam::Beta,
        SweepParam::Q,
        SweepParam::U0,
        SweepParam::V0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::P => "p",
            SweepParam::Alpha => "alpha",
            SweepParam::AlphaFrac => "alpha_frac",
            SweepParam::N => "n",
            SweepParam::M => "m",
            SweepParam::Beta => "beta",
            SweepParam::Q => "q",
            SweepParam::U0 => "u0",
            SweepParam::V0 => "v0",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    /// Axes in canonical parameter order; empty means a single point.
    pub sweep: Vec<SweepAxis>,
    pub seed: u64,
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub assignments: Vec<(SweepParam, f64)>,
}

impl RunConfig {
    /// Cartesian product of the sweep axes, last axis varying fastest.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let mut points = vec![Vec::new()];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|prefix: Vec<(SweepParam, f64)>| {
                    axis.values.iter().map(move |&x| {
                        let mut next = prefix.clone();
                        next.push((axis.param, x));
                        next
                    })
                })
                .collect();
        }
        points.into_iter().map(|a| self.point(a)).collect()
    }

    fn point(&self, assignments: Vec<(SweepParam, f64)>) -> SweepPoint {
        let mut problem = self.problem.clone();
        let mut solver = self.solver;
        let mut alpha_frac = None;
        for &(param, x) in &assignments {
            match param {
                SweepParam::P => problem.p = x,
                SweepParam::Alpha => problem.alpha = x,
                SweepParam::AlphaFrac => alpha_frac = Some(x),
                SweepParam::N => problem.n = x as u32,
                SweepParam::M => problem.g1 = power(x),
                SweepParam::Beta => problem.g2 = power(x),
                SweepParam::Q => problem.h = power(x),
                SweepParam::U0 => solver.u0 = x,
                SweepParam::V0 => solver.v0 = x,
            }
        }
        if let Some(frac) = alpha_frac {
            problem.alpha = frac * (problem.p - 1.0);
        }
        SweepPoint {
            problem,
            solver,
            assignments,
        }
    }
}

fn power(x: f64) -> String {
    if x == 0.0 {
        "1".to_string()
    } else if x == 1.0 {
        "t".to_string()
    } else {
        format!("t^{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = self.path.display();
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match issue.line {
                Some(line) => write!(f, "{path}:{line}: {}", issue.message)?,
                None => write!(f, "{path}: {}", issue.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        issues: vec![ConfigIssue {
            line: None,
            message: format!("cannot read file: {e}"),
        }],
    })?;
    parse_config(&text).map_err(|issues| ConfigError {
        path: path.to_path_buf(),
        issues,
    })
}

/// Parses and validates a configuration, collecting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigIssue>> {
    let mut cx = Context {
        text,
        issues: Vec::new(),
    };
    let (root, errors) = DeTable::parse_recoverable(text);
    for e in errors {
        let line = e.span().map(|s| cx.line(s.start));
        cx.push(line, format!("TOML syntax: {}", e.message()));
    }
    if !cx.issues.is_empty() {
        return Err(cx.issues);
    }
    let root = root.into_inner();

    let mut problem_table = None;
    let mut solver_table = None;
    let mut sweep_table = None;
    let mut seed = 0;
    for (key, value) in root.iter() {
        match key.get_ref().as_ref() {
            "problem" => problem_table = cx.table(key, value),
            "solver" => solver_table = cx.table(key, value),
            "sweep" => sweep_table = cx.table(key, value),
            "seed" => seed = cx.unsigned(key, value).unwrap_or(0),
            other => cx.at(key.span(), format!("unknown key `{other}` (expected problem, solver, sweep or seed)")),
        }
    }

    let problem = match problem_table {
        Some((span, table)) => cx.problem(span, table),
        None => {
            cx.push(None, "missing [problem] section".into());
            None
        }
    };
    let solver = match solver_table {
        Some((_, table)) => cx.solver(table),
        None => SolverConfig::default(),
    };
    let sweep = match sweep_table {
        Some((span, table)) => cx.sweep(span, table),
        None => Vec::new(),
    };

    match problem {
        Some(problem) if cx.issues.is_empty() => Ok(RunConfig {
            problem,
            solver,
            sweep,
            seed,
        }),
        _ => {
            cx.issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
            Err(cx.issues)
        }
    }
}

struct Context<'t> {
    text: &'t str,
    issues: Vec<ConfigIssue>,
}

impl<'t> Context<'t> {
    fn line(&self, offset: usize) -> usize {
        let end = offset.min(self.text.len());
        self.text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn push(&mut self, line: Option<usize>, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn at(&mut self, span: Range<usize>, message: String) {
        let line = self.line(span.start);
        self.push(Some(line), message);
    }

    fn table<'i>(
        &mut self,
        key: &Spanned<std::borrow::Cow<'i, str>>,
        value: &'i Spanned<DeValue<'i>>,
    ) -> Option<(Range<usize>, &'i DeTable<'i>)> {
        match value.get_ref() {
            DeValue::Table(t) => Some((key.span(), t)),
            _ => {
                self.at(key.span(), format!("`{}` must be a table", key.get_ref()));
                None
            }
        }
    }

    fn number(&mut self, key: &str, value: &Spanned<DeValue<'_>>) -> Option<f64> {
        match number_of(value.get_ref()) {
            Some(x) => Some(x),
            None => {
                self.at(value.span(), format!("`{key}` must be a number"));
                None
            }
        }
    }

    fn unsigned(&mut self, key: &Spanned<std::borrow::Cow<'_, str>>, value: &Spanned<DeValue<'_>>) -> Option<u64> {
        let parsed = match value.get_ref() {
            DeValue::Integer(i) => u64::from_str_radix(i.as_str(), i.radix()).ok(),
            _ => None,
        };
        if parsed.is_none() {
            self.at(value.span(), format!("`{}` must be a non-negative integer", key.get_ref()));
        }
        parsed
    }

    fn string(&mut self, key: &str, value: &Spanned<DeValue<'_>>) -> Option<String> {
        match value.get_ref() {
            DeValue::String(s) => Some(s.to_string()),
            _ => {
                self.at(value.span(), format!("`{key}` must be a string"));
                None
            }
        }
    }

    fn problem(&mut self, span: Range<usize>, table: &DeTable<'_>) -> Option<ProblemConfig> {
        const KEYS: [&str; 9] = ["p", "alpha", "n", "f1", "f2", "g1", "g2", "h", "omega"];
        let (mut p, mut alpha, mut n) = (None, None, None);
        let mut funcs: [Option<String>; 5] = Default::default();
        let mut omega = Some(Omega::Ball);
        let mut value_lines = Vec::new();
        for (key, value) in table.iter() {
            let name: &str = key.get_ref().as_ref();
            value_lines.push((name.to_string(), value.span()));
            match name {
                "p" => p = self.number(name, value),
                "alpha" => alpha = self.number(name, value),
                "n" => {
                    n = match value.get_ref() {
                        DeValue::Integer(i) => u32::from_str_radix(i.as_str(), i.radix()).ok(),
                        _ => None,
                    };
                    if n.is_none() {
                        self.at(value.span(), "`n` must be a positive integer".into());
                    }
                }
                "f1" | "f2" | "g1" | "g2" | "h" => {
                    let idx = ["f1", "f2", "g1", "g2", "h"].iter().position(|k| *k == name).unwrap();
                    funcs[idx] = self.string(name, value);
                    if let Some(text) = &funcs[idx] {
                        if let Err(e) = plap_core::FuncExpr::parse(text) {
                            self.at(value.span(), format!("`{name}`: {e}"));
                            funcs[idx] = None;
                        }
                    }
                }
                "omega" => {
                    omega = match self.string(name, value).as_deref() {
                        Some("ball") => Some(Omega::Ball),
                        Some("wholespace") => Some(Omega::WholeSpace),
                        Some(other) => {
                            self.at(value.span(), format!("`omega` must be \"ball\" or \"wholespace\" (got \"{other}\")"));
                            None
                        }
                        None => None,
                    }
                }
                other => self.at(key.span(), format!("unknown key `{other}` in [problem] (expected one of {})", KEYS.join(", "))),
            }
        }
        let header = self.line(span.start);
        let missing = |name: &str, present: bool, cx: &mut Self| {
            if !present && !value_lines.iter().any(|(k, _)| k == name) {
                cx.push(Some(header), format!("[problem] is missing `{name}`"));
            }
        };
        missing("p", p.is_some(), self);
        missing("alpha", alpha.is_some(), self);
        missing("n", n.is_some(), self);
        for (i, name) in ["f1", "f2", "g1", "g2", "h"].iter().enumerate() {
            missing(name, funcs[i].is_some(), self);
        }
        let [Some(f1), Some(f2), Some(g1), Some(g2), Some(h)] = funcs else {
            return None;
        };
        let config = ProblemConfig {
            p: p?,
            alpha: alpha?,
            n: n?,
            f1,
            f2,
            g1,
            g2,
            h,
            omega: omega?,
        };
        if let Err(SpecError::Invalid(report)) = config.spec() {
            for issue in &report.issues {
                self.push(Some(header), format!("[problem] {issue}"));
            }
            return None;
        }
        Some(config)
    }

    fn solver(&mut self, table: &DeTable<'_>) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        for (key, value) in table.iter() {
            let name: &str = key.get_ref().as_ref();
            let slot = match name {
                "u0" => &mut cfg.u0,
                "v0" => &mut cfg.v0,
                "target_radius" => &mut cfg.target_radius,
                "blowup_threshold" => &mut cfg.blowup_threshold,
                "rel_tol" => &mut cfg.rel_tol,
                other => {
                    self.at(
                        key.span(),
                        format!("unknown key `{other}` in [solver] (expected u0, v0, target_radius, blowup_threshold or rel_tol)"),
                    );
                    continue;
                }
            };
            if let Some(x) = self.number(name, value) {
                if x > 0.0 && x.is_finite() {
                    *slot = x;
                } else {
                    self.at(value.span(), format!("`{name}` must be positive and finite (got {x})"));
                }
            }
        }
        if cfg.options().validate().is_err() {
            self.push(None, "[solver] target_radius is too small for the default step sizes".into());
        }
        cfg
    }

    fn sweep(&mut self, span: Range<usize>, table: &DeTable<'_>) -> Vec<SweepAxis> {
        let header = self.line(span.start);
        let mut axes: Vec<SweepAxis> = Vec::new();
        let mut single_param = None;
        let mut single_values = None;
        for (key, value) in table.iter() {
            let name: &str = key.get_ref().as_ref();
            match name {
                "parameter" => {
                    if let Some(s) = self.string(name, value) {
                        match SweepParam::from_name(&s) {
                            Some(p) => single_param = Some(p),
                            None => self.at(value.span(), format!("unknown sweep parameter \"{s}\" (expected one of {})", param_names())),
                        }
                    }
                }
                "values" => single_values = self.values(name, value),
                other => match SweepParam::from_name(other) {
                    Some(param) => {
                        if let Some(values) = self.values(other, value) {
                            axes.push(SweepAxis { param, values });
                        }
                    }
                    None => self.at(
                        key.span(),
                        format!("unknown key `{other}` in [sweep] (expected parameter, values, or one of {})", param_names()),
                    ),
                },
            }
        }
        match (single_param, single_values) {
            (Some(param), Some(values)) => axes.push(SweepAxis { param, values }),
            (None, None) => {}
            (Some(_), None) => self.push(Some(header), "[sweep] has `parameter` but no `values`".into()),
            (None, Some(_)) => self.push(Some(header), "[sweep] has `values` but no `parameter`".into()),
        }
        axes.sort_by_key(|a| a.param);
        for pair in axes.windows(2) {
            if pair[0].param == pair[1].param {
                self.push(Some(header), format!("sweep parameter `{}` given twice", pair[0].param.name()));
            }
        }
        let has = |p: SweepParam| axes.iter().any(|a| a.param == p);
        if has(SweepParam::Alpha) && has(SweepParam::AlphaFrac) {
            self.push(Some(header), "sweep over both `alpha` and `alpha_frac`".into());
        }
        for axis in &axes {
            if axis.param == SweepParam::N && axis.values.iter().any(|&x| x.fract() != 0.0 || x < 1.0) {
                self.push(Some(header), "sweep values for `n` must be positive integers".into());
            }
        }
        axes
    }

    fn values(&mut self, key: &str, value: &Spanned<DeValue<'_>>) -> Option<Vec<f64>> {
        let DeValue::Array(items) = value.get_ref() else {
            self.at(value.span(), format!("`{key}` must be an array of numbers"));
            return None;
        };
        if items.is_empty() {
            self.at(value.span(), format!("`{key}` must not be empty"));
            return None;
        }
        let mut out = Vec::with_capacity(items.len());
        for item in items.iter() {
            out.push(self.number(key, item)?);
        }
        Some(out)
    }
}

fn param_names() -> String {
    SweepParam::ALL.map(|p| p.name()).join(", ")
}

fn number_of(value: &DeValue<'_>) -> Option<f64> {
    match value {
        DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).ok().map(|x| x as f64),
        DeValue::Float(f) => f.as_str().replace('_', "").parse().ok(),
        _ => None,
    }
}
