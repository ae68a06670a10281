//! Radial solutions: Picard bootstrap near the origin, adaptive marching of
//! the integrated system, blow-up detection, scaling and envelope checks.

mod envelope;
mod march;
mod picard;
mod scaling;

pub use envelope::{blowup_envelope_check, EnvelopeReport};
pub use march::march;
pub use picard::{apply_operator, picard_bootstrap, BootstrapOptions, Segment};
pub use scaling::{check_scaling_identity, scale_problem, ScalingReport};

use serde::Serialize;
use thiserror::Error;

use crate::criteria::CriteriaError;
use crate::problem::{ProblemSpec, SpecError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("initial values must be positive (u0 = {u0}, v0 = {v0})")]
    NonPositiveInitial { u0: f64, v0: f64 },
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("Picard iteration failed to contract after {retries} radius halvings (last radius {radius})")]
    NoContraction { retries: usize, radius: f64 },
    #[error("solution blew up inside the bootstrap radius {radius}")]
    BootstrapBlowUp { radius: f64 },
    #[error("operation requires a blow-up run")]
    NotBlowUp,
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    ReachedTarget,
    BlowUp,
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub target_radius: f64,
    pub blowup_threshold: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    /// Radius of the Picard segment; `None` means `10⁻³·target_radius`.
    pub bootstrap_radius: Option<f64>,
    pub max_steps: usize,
}

impl SolverOptions {
    pub fn new(target_radius: f64) -> Self {
        Self {
            target_radius,
            blowup_threshold: 1e8,
            rel_tol: 1e-8,
            initial_step: 1e-4 * target_radius,
            min_step: 1e-14 * target_radius,
            bootstrap_radius: None,
            max_steps: 5_000_000,
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.blowup_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("target_radius", self.target_radius),
            ("blowup_threshold", self.blowup_threshold),
            ("rel_tol", self.rel_tol),
            ("initial_step", self.initial_step),
            ("min_step", self.min_step),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(SolverError::Options(format!("{name} must be positive and finite (got {x})")));
            }
        }
        if !(self.min_step < self.initial_step && self.initial_step < self.target_radius) {
            return Err(SolverError::Options("need min_step < initial_step < target_radius".into()));
        }
        Ok(())
    }

    pub fn bootstrap_radius(&self) -> f64 {
        self.bootstrap_radius.unwrap_or(1e-3 * self.target_radius)
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::new(50.0)
    }
}

/// Solution values at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub r: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub dv: f64,
}

/// `v` crossing one of the doubled thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub threshold: f64,
    pub r: f64,
    pub u: f64,
    pub w: f64,
    /// Distance from the previous crossing (NaN for the first).
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowUpDiagnostics {
    pub crossings: Vec<Crossing>,
    /// Last ratio of successive crossing gaps.
    pub gap_ratio: f64,
    /// Fitted `a` in `w ~ (R0 − r)^{−a}`; `a ≥ 1` means `u` is unbounded.
    pub w_tail_exponent: f64,
    /// Ratio of the last two increments of `u` between crossings.
    pub u_increment_ratio: f64,
}

impl BlowUpDiagnostics {
    /// Whether the trajectory indicates that `u` diverges together with `v`.
    pub fn u_unbounded(&self, threshold: f64) -> bool {
        self.w_tail_exponent >= U_UNBOUNDED_EXPONENT
            || self.crossings.last().is_some_and(|c| c.u > threshold)
    }
}

/// `w ~ d^{−a}` is integrable iff `a < 1`; this margin absorbs fitting error.
pub const U_UNBOUNDED_EXPONENT: f64 = 0.95;

#[derive(Debug, Clone, Serialize)]
pub struct RadialSolution {
    #[serde(skip)]
    pub spec: ProblemSpec,
    pub u0: f64,
    pub v0: f64,
    pub threshold: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub dv: Vec<f64>,
    pub r0: Option<f64>,
    pub terminated: Termination,
    /// Last state reached, possibly beyond the stored trajectory.
    pub end_state: Point,
    pub blowup: Option<BlowUpDiagnostics>,
    pub bootstrap_radius: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub note: Option<String>,
}

impl RadialSolution {
    /// Builds a solution from externally supplied columns (e.g. a trajectory file).
    pub fn from_columns(
        spec: ProblemSpec,
        r: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        w: Vec<f64>,
        dv: Vec<f64>,
        terminated: Termination,
        threshold: f64,
    ) -> Self {
        let last = r.len().saturating_sub(1);
        let at = |c: &Vec<f64>| c.get(last).copied().unwrap_or(f64::NAN);
        let end_state = Point {
            r: at(&r),
            u: at(&u),
            v: at(&v),
            w: at(&w),
            dv: at(&dv),
        };
        Self {
            spec,
            u0: u.first().copied().unwrap_or(f64::NAN),
            v0: v.first().copied().unwrap_or(f64::NAN),
            threshold,
            r,
            u,
            v,
            w,
            dv,
            r0: None,
            terminated,
            end_state,
            blowup: None,
            bootstrap_radius: 0.0,
            accepted_steps: 0,
            rejected_steps: 0,
            note: None,
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_end(&self) -> f64 {
        *self.r.last().expect("non-empty trajectory")
    }

    /// Cubic Hermite interpolation of `(u, v)` at `x` inside the grid.
    pub fn interpolate(&self, x: f64) -> Option<(f64, f64)> {
        let r = &self.r;
        if r.is_empty() || x < r[0] || x > *r.last().unwrap() {
            return None;
        }
        let i = match r.partition_point(|&t| t <= x) {
            0 => 0,
            k if k >= r.len() => r.len() - 2,
            k => k - 1,
        };
        if r.len() == 1 {
            return Some((self.u[0], self.v[0]));
        }
        let u = hermite(r[i], r[i + 1], self.u[i], self.u[i + 1], self.w[i], self.w[i + 1], x);
        let v = hermite(r[i], r[i + 1], self.v[i], self.v[i + 1], self.dv[i], self.dv[i + 1], x);
        Some((u, v))
    }

    pub fn sup_u(&self) -> f64 {
        self.u.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Cubic Hermite interpolant through `(a, ya, da)` and `(b, yb, db)`.
pub(crate) fn hermite(a: f64, b: f64, ya: f64, yb: f64, da: f64, db: f64, x: f64) -> f64 {
    let h = b - a;
    let t = (x - a) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ya + h10 * h * da + h01 * yb + h11 * h * db
}
