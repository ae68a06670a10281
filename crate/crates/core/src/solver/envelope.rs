//! Gradient envelope near the blow-up radius: on the last decade of
//! `R0 − r` the quantity `Φ(w^{p−1−α}) / (R0 − r)` stays between two
//! positive constants, i.e. `Φ⁻¹(C₂d)^θ ≤ w ≤ Φ⁻¹(C₁d)^θ` with `d = R0 − r`.

use serde::Serialize;

use crate::criteria::Phi;

use super::{RadialSolution, SolverError, Termination};

const MAX_SAMPLES: usize = 200;
/// Relative slack for the pointwise check, covering the tolerance of `Φ⁻¹`.
const SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub r0: f64,
    /// Distances `R0 − r` spanned by the fit.
    pub window: (f64, f64),
    pub points_checked: usize,
    pub c1: f64,
    pub c2: f64,
    pub spread: f64,
    pub max_violation: f64,
    /// Points whose relative violation exceeds the slack.
    pub violations: usize,
    pub pass: bool,
}

pub fn blowup_envelope_check(sol: &RadialSolution) -> Result<EnvelopeReport, SolverError> {
    if sol.terminated != Termination::BlowUp {
        return Err(SolverError::NotBlowUp);
    }
    let r0 = sol.r0.ok_or(SolverError::NotBlowUp)?;
    let phi = Phi::new(&sol.spec)?;
    let theta = sol.spec.theta()?;
    let gap = sol.spec.gap();

    let d_end = r0 - sol.r_end();
    if !(d_end > 0.0) {
        return Err(SolverError::Options(format!("blow-up radius {r0} does not exceed the last grid point")));
    }
    let window = (d_end, 10.0 * d_end);
    let idx: Vec<usize> = (0..sol.len())
        .filter(|&i| {
            let d = r0 - sol.r[i];
            d >= window.0 && d <= window.1 && sol.w[i] > 0.0
        })
        .collect();
    let stride = idx.len().div_ceil(MAX_SAMPLES).max(1);
    let picked: Vec<usize> = idx.iter().copied().step_by(stride).collect();
    if picked.len() < 2 {
        return Err(SolverError::Options("too few grid points in the final decade".into()));
    }

    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0_f64;
    for &i in &picked {
        let c = phi.eval(sol.w[i].powf(gap))? / (r0 - sol.r[i]);
        c1 = c1.min(c);
        c2 = c2.max(c);
    }

    let mut max_violation = 0.0_f64;
    let mut violations = 0;
    for &i in &picked {
        let d = r0 - sol.r[i];
        let lower = phi.inverse(c2 * d, 1e-12)?.powf(theta);
        let upper = phi.inverse(c1 * d, 1e-12)?.powf(theta);
        let w = sol.w[i];
        let v = ((lower - w) / w).max((w - upper) / w);
        if !(v <= SLACK) {
            violations += 1;
        }
        max_violation = max_violation.max(v);
    }
    let pass = c1 > 0.0 && c1 < c2 && c2.is_finite() && violations == 0;
    Ok(EnvelopeReport {
        r0,
        window,
        points_checked: picked.len(),
        c1,
        c2,
        spread: c2 / c1,
        max_violation,
        violations,
        pass,
    })
}
