//! Radial rescaling `u(r) = ũ(r/λ)`.
//!
//! With `ũ(s) = u(λs)` the p-Laplacian picks up a factor `λ^p` and the
//! gradient a factor `λ`, so the rescaled problem has
//! `f̃₁(r) = λ^{p−α} f₁(λr)`, `f̃₂(r) = λ^p f₂(λr)`, `h̃(t) = h(t/λ)` and
//! unchanged `g₁, g₂`.

use serde::Serialize;

use crate::problem::ProblemSpec;

use super::{march, SolverError, SolverOptions};

pub fn scale_problem(spec: &ProblemSpec, lambda: f64) -> Result<ProblemSpec, SolverError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(SolverError::Options(format!("scaling factor must be positive (got {lambda})")));
    }
    let p = spec.p();
    let f1 = spec.f1().with_scaled_argument(lambda).scaled(lambda.powf(p - spec.alpha()));
    let f2 = spec.f2().with_scaled_argument(lambda).scaled(lambda.powf(p));
    let h = spec.h().with_scaled_argument(1.0 / lambda);
    Ok(spec.with_functions(f1, f2, spec.g1().clone(), spec.g2().clone(), h)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingReport {
    pub lambda: f64,
    /// Radius of the rescaled solve; the original runs to `λ·radius`.
    pub radius: f64,
    pub points_checked: usize,
    pub sup_u_diff: f64,
    pub sup_v_diff: f64,
    pub sup_u: f64,
    /// `10·rel_tol·(1 + sup|u|)`
    pub bound: f64,
    pub pass: bool,
}

impl ScalingReport {
    pub fn residual(&self) -> f64 {
        self.sup_u_diff.max(self.sup_v_diff)
    }
}

/// Solves the rescaled problem on `[0, radius]` and the original on
/// `[0, λ·radius]`, comparing `u(λs)` with `ũ(s)` at the rescaled grid points.
pub fn check_scaling_identity(
    spec: &ProblemSpec,
    lambda: f64,
    u0: f64,
    v0: f64,
    radius: f64,
    opts: &SolverOptions,
) -> Result<ScalingReport, SolverError> {
    let tilde = scale_problem(spec, lambda)?;
    let mut tilde_opts = SolverOptions::new(radius);
    tilde_opts.rel_tol = opts.rel_tol;
    tilde_opts.blowup_threshold = opts.blowup_threshold;
    let mut orig_opts = SolverOptions::new(lambda * radius);
    orig_opts.rel_tol = opts.rel_tol;
    orig_opts.blowup_threshold = opts.blowup_threshold;

    let small = march(&tilde, u0, v0, &tilde_opts)?;
    let large = march(spec, u0, v0, &orig_opts)?;
    let span = small.r_end().min(large.r_end() / lambda);

    let mut sup_u_diff = 0.0_f64;
    let mut sup_v_diff = 0.0_f64;
    let mut points = 0;
    for i in 0..small.len() {
        let s = small.r[i];
        if s > span {
            break;
        }
        let Some((u, v)) = large.interpolate((lambda * s).min(large.r_end())) else {
            continue;
        };
        sup_u_diff = sup_u_diff.max((u - small.u[i]).abs());
        sup_v_diff = sup_v_diff.max((v - small.v[i]).abs());
        points += 1;
    }
    let sup_u = large.sup_u().max(small.sup_u());
    let bound = 10.0 * opts.rel_tol * (1.0 + sup_u);
    Ok(ScalingReport {
        lambda,
        radius,
        points_checked: points,
        sup_u_diff,
        sup_v_diff,
        sup_u,
        bound,
        pass: sup_u_diff.max(sup_v_diff) <= bound,
    })
}
