//! Pointwise checks of the structural inequalities every radial solution
//! satisfies, evaluated on computed trajectories and function samples.

use serde::Serialize;

use crate::criteria::{sandwich_check, CriteriaError};
use crate::expr::FuncExpr;
use crate::fd::derivative;
use crate::solver::RadialSolution;

pub const CONVEXITY_SLACK: f64 = 1e-4;
pub const ESTIMATE_SLACK: f64 = 1e-6;
pub const SANDWICH_SLACK: f64 = 1e-9;
/// `v` counts as bounded while it stays below this multiple of `v(0)`.
pub const BOUNDED_V_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub points_checked: usize,
    pub max_relative_violation: f64,
    /// Location (`r` or `s`) of the worst violation.
    pub worst_at: Option<f64>,
    pub slack: f64,
    pub pass: bool,
}

impl InequalityReport {
    fn new(name: &str, slack: f64) -> Self {
        Self {
            name: name.to_string(),
            points_checked: 0,
            max_relative_violation: f64::NEG_INFINITY,
            worst_at: None,
            slack,
            pass: true,
        }
    }

    fn record(&mut self, at: f64, violation: f64) {
        self.points_checked += 1;
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        if violation > self.max_relative_violation {
            self.max_relative_violation = violation;
            self.worst_at = Some(at);
        }
    }

    fn finish(mut self) -> Self {
        if self.points_checked == 0 {
            self.max_relative_violation = 0.0;
        }
        self.pass = self.max_relative_violation <= self.slack;
        self
    }
}

/// Relative shortfall of a quantity that must be strictly positive.
fn positivity_violation(x: f64, scale: f64) -> f64 {
    if x > 0.0 {
        -x / scale
    } else {
        (-x / scale).max(f64::MIN_POSITIVE)
    }
}

/// `w > 0` and `v' > 0` at every grid point with `r > 0`.
pub fn check_monotone(sol: &RadialSolution) -> InequalityReport {
    let mut rep = InequalityReport::new("monotone", 0.0);
    let sw = sol.w.iter().fold(f64::MIN_POSITIVE, |m, x| m.max(x.abs()));
    let sd = sol.dv.iter().fold(f64::MIN_POSITIVE, |m, x| m.max(x.abs()));
    for i in 0..sol.len() {
        if sol.r[i] <= 0.0 {
            continue;
        }
        let v = positivity_violation(sol.w[i], sw).max(positivity_violation(sol.dv[i], sd));
        rep.record(sol.r[i], v);
    }
    rep.finish()
}

/// Radii over which the convexity bounds are checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub r_min: f64,
    /// Upper end as a fraction of the last grid radius.
    pub end_fraction: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            r_min: 0.0,
            end_fraction: 0.9,
        }
    }
}

pub fn check_convexity_bounds(sol: &RadialSolution) -> InequalityReport {
    check_convexity_bounds_on(sol, Window::default())
}

/// Finite-difference derivatives of `w^{p−1−α}` and `(v')^{p−1}` against
///
/// ```text
///   (p−1−α)/(n(p−1−α)+α) f₁g₁(v) ≤ [w^{p−1−α}]' ≤ (p−1−α)/(p−1) f₁g₁(v)
///   f₂g₂(v)h(w)/n                ≤ [(v')^{p−1}]' ≤ f₂g₂(v)h(w)
/// ```
///
/// The discrepancy between 3- and 5-point derivatives is credited as
/// finite-difference error before the relative slack applies.
pub fn check_convexity_bounds_on(sol: &RadialSolution, window: Window) -> InequalityReport {
    let mut rep = InequalityReport::new("convexity_bounds", CONVEXITY_SLACK);
    let spec = &sol.spec;
    let n = spec.n() as f64;
    let gap = spec.gap();
    let pm1 = spec.p() - 1.0;
    let alpha = spec.alpha();
    if sol.len() < 10 {
        rep.record(sol.r.first().copied().unwrap_or(0.0), f64::INFINITY);
        return rep.finish();
    }
    let big_w: Vec<f64> = sol.w.iter().map(|w| w.powf(gap)).collect();
    let big_z: Vec<f64> = sol.dv.iter().map(|d| d.powf(pm1)).collect();
    let r_max = window.end_fraction * sol.r_end();
    for i in 2..sol.len() - 2 {
        let r = sol.r[i];
        if r < window.r_min || r > r_max {
            continue;
        }
        let f1g1 = spec.f1().eval(r) * spec.g1().eval(sol.v[i]);
        let f2g2h = spec.f2().eval(r) * spec.g2().eval(sol.v[i]) * spec.h().eval(sol.w[i]);

        let d3 = derivative(&sol.r, &big_w, i, 3);
        let err = (d3 - derivative(&sol.r, &big_w, i, 5)).abs();
        let lower = gap / (n * gap + alpha) * f1g1;
        let upper = gap / pm1 * f1g1;
        let v1 = (lower - d3 - err).max(d3 - upper - err) / upper;

        let d3 = derivative(&sol.r, &big_z, i, 3);
        let err = (d3 - derivative(&sol.r, &big_z, i, 5)).abs();
        let lower = f2g2h / n;
        let upper = f2g2h;
        let v2 = (lower - d3 - err).max(d3 - upper - err) / upper;

        rep.record(r, v1.max(v2));
    }
    rep.finish()
}

/// `w^{p−1−α}/r ≤ δ/((δ+1)(n−1)) f₁(r) g₁(v)` at every `r > 0`.
pub fn check_uprime_estimate(sol: &RadialSolution) -> InequalityReport {
    let mut rep = InequalityReport::new("uprime_estimate", ESTIMATE_SLACK);
    let spec = &sol.spec;
    let (Ok(delta), gap) = (spec.delta(), spec.gap()) else {
        rep.record(0.0, f64::INFINITY);
        return rep.finish();
    };
    let c = delta / ((delta + 1.0) * (spec.n() as f64 - 1.0));
    for i in 0..sol.len() {
        let r = sol.r[i];
        if r <= 0.0 {
            continue;
        }
        let lhs = sol.w[i].powf(gap) / r;
        let rhs = c * spec.f1().eval(r) * spec.g1().eval(sol.v[i]);
        rep.record(r, (lhs - rhs) / rhs);
    }
    rep.finish()
}

/// Ordering of the three sandwich quantities at each sample `s`.
pub fn check_sandwich(h: &FuncExpr, p: f64, samples: &[f64]) -> Result<InequalityReport, CriteriaError> {
    let mut rep = InequalityReport::new("sandwich", SANDWICH_SLACK);
    for &s in samples {
        let q = sandwich_check(h, p, s)?;
        rep.record(s, q.max_relative_violation());
    }
    Ok(rep.finish())
}

/// Fails when `u` passed the blow-up threshold while `v` stayed below
/// `10³·v(0)`.
pub fn check_no_u_only_blowup(sol: &RadialSolution) -> InequalityReport {
    let mut rep = InequalityReport::new("no_u_only_blowup", 0.0);
    let u_max = sol.u.iter().copied().fold(sol.end_state.u, f64::max);
    let v_max = sol.v.iter().copied().fold(sol.end_state.v, f64::max);
    let t = sol.threshold;
    let violation = if u_max > t && v_max < BOUNDED_V_FACTOR * sol.v0 {
        (u_max - t) / t
    } else {
        0.0
    };
    rep.record(sol.end_state.r, violation);
    rep.finish()
}

/// Default sample radii for the sandwich check.
pub const SANDWICH_SAMPLES: [f64; 7] = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3];

/// All checks: the four trajectory checks followed by the sandwich check on `h`.
pub fn run_all(sol: &RadialSolution) -> Vec<InequalityReport> {
    let mut reports = vec![
        check_monotone(sol),
        check_convexity_bounds(sol),
        check_uprime_estimate(sol),
        check_no_u_only_blowup(sol),
    ];
    let sandwich = check_sandwich(sol.spec.h(), sol.spec.p(), &SANDWICH_SAMPLES).unwrap_or_else(|_| {
        let mut r = InequalityReport::new("sandwich", SANDWICH_SLACK);
        r.record(0.0, f64::INFINITY);
        r.finish()
    });
    reports.push(sandwich);
    reports
}

/// Relative residuals of
///
/// ```text
///   [w^{p−1−α}]' + (δ/r) w^{p−1−α} − (δ/(n−1)) f₁g₁(v) = 0
///   [(v')^{p−1}]' + ((n−1)/r) (v')^{p−1} − f₂g₂(v)h(w) = 0
/// ```
///
/// each divided by the sum of the magnitudes of its three terms. Derivatives
/// use 5-point stencils in `(ln r, ln X)` where `X > 0` on the stencil, so
/// that power-law behaviour near the origin is differentiated accurately,
/// and in `(r, X)` otherwise. The residual is not evaluated at `r = 0` (NaN).
pub fn equation_residuals(sol: &RadialSolution) -> (Vec<f64>, Vec<f64>) {
    let spec = &sol.spec;
    let len = sol.len();
    let (Ok(delta), gap) = (spec.delta(), spec.gap()) else {
        return (vec![f64::NAN; len], vec![f64::NAN; len]);
    };
    let n1 = spec.n() as f64 - 1.0;
    let pm1 = spec.p() - 1.0;
    let big_w: Vec<f64> = sol.w.iter().map(|w| w.powf(gap)).collect();
    let big_z: Vec<f64> = sol.dv.iter().map(|d| d.powf(pm1)).collect();
    let ln_r: Vec<f64> = sol.r.iter().map(|r| r.ln()).collect();
    let ln_w: Vec<f64> = big_w.iter().map(|x| x.ln()).collect();
    let ln_z: Vec<f64> = big_z.iter().map(|x| x.ln()).collect();
    let mut res1 = Vec::with_capacity(len);
    let mut res2 = Vec::with_capacity(len);
    for i in 0..len {
        let r = sol.r[i];
        if r <= 0.0 || len < 5 {
            res1.push(f64::NAN);
            res2.push(f64::NAN);
            continue;
        }
        let dw = log_derivative(&sol.r, &ln_r, &big_w, &ln_w, i);
        let a = delta * big_w[i] / r;
        let b = delta / n1 * spec.f1().eval(r) * spec.g1().eval(sol.v[i]);
        res1.push(relative_residual(dw + a - b, dw.abs() + a + b));

        let dz = log_derivative(&sol.r, &ln_r, &big_z, &ln_z, i);
        let a = n1 * big_z[i] / r;
        let b = spec.f2().eval(r) * spec.g2().eval(sol.v[i]) * spec.h().eval(sol.w[i]);
        res2.push(relative_residual(dz + a - b, dz.abs() + a + b));
    }
    (res1, res2)
}

/// `X'(r_i)` from `d ln X / d ln r` on the grid without `r = 0`, falling back
/// to a plain stencil when `X` is not positive throughout.
fn log_derivative(r: &[f64], ln_r: &[f64], x: &[f64], ln_x: &[f64], i: usize) -> f64 {
    let first = usize::from(r[0] <= 0.0);
    let n = r.len() - first;
    if n >= 5 {
        let j = i - first;
        let start = j.saturating_sub(2).min(n - 5) + first;
        if ln_x[start..start + 5].iter().all(|v| v.is_finite()) {
            let slope = derivative(&ln_r[first..], &ln_x[first..], j, 5);
            return slope * x[i] / r[i];
        }
    }
    derivative(r, x, i, 5)
}

fn relative_residual(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        0.0
    }
}
