//! Adaptive marching of the integrated radial system.
//!
//! The state is `y = (P, Q, u, v)` with
//!
//! ```text
//!   P(r) = ∫₀ʳ t^δ f₁ g₁(v) dt,           w  = ((δ/(n−1)) P / r^δ)^θ
//!   Q(r) = ∫₀ʳ t^{n−1} f₂ g₂(v) h(w) dt,  v' = (Q / r^{n−1})^{1/(p−1)}
//! ```
//!
//! advanced by implicit trapezoidal steps with step-doubling error control.
//! Blow-up is recognised from the crossings of `v` through the thresholds
//! `T, 2T, 4T, …`: near a finite-radius singularity the gaps between
//! successive crossings shrink geometrically, which also yields `R0`.

use crate::problem::ProblemSpec;

use super::picard::{picard_bootstrap, BootstrapOptions};
use super::{hermite, BlowUpDiagnostics, Crossing, Point, RadialSolution, SolverError, SolverOptions, Termination};

/// Crossings needed before the gap ratios are trusted.
const MIN_CROSSINGS: usize = 6;
/// Gap ratios at or above this are treated as non-geometric (global growth).
const MAX_GAP_RATIO: f64 = 0.95;
const RATIO_AGREEMENT: f64 = 0.02;

type State = [f64; 4];

struct Model<'a> {
    spec: &'a ProblemSpec,
    theta: f64,
    delta: f64,
    c1: f64,
    n1: f64,
    inv_pm1: f64,
    gap: f64,
    pm1: f64,
    /// Leading power of `v'` at the origin.
    gamma_v: f64,
}

impl<'a> Model<'a> {
    fn new(spec: &'a ProblemSpec) -> Result<Self, SolverError> {
        let theta = spec.theta()?;
        let delta = spec.delta()?;
        let n1 = spec.n() as f64 - 1.0;
        Ok(Self {
            spec,
            theta,
            delta,
            c1: delta / n1,
            n1,
            inv_pm1: 1.0 / (spec.p() - 1.0),
            gap: spec.gap(),
            pm1: spec.p() - 1.0,
            gamma_v: (1.0 + theta * spec.h().lowest().exponent) / (spec.p() - 1.0),
        })
    }

    fn derived(&self, r: f64, y: &State) -> (f64, f64) {
        let w = (self.c1 * y[0].max(0.0) / r.powf(self.delta)).powf(self.theta);
        let dv = (y[1].max(0.0) / r.powf(self.n1)).powf(self.inv_pm1);
        (w, dv)
    }

    fn rhs(&self, r: f64, y: &State) -> State {
        let (w, dv) = self.derived(r, y);
        let s = self.spec;
        [
            r.powf(self.delta) * s.f1().eval(r) * s.g1().eval(y[3]),
            r.powf(self.n1) * s.f2().eval(r) * s.g2().eval(y[3]) * s.h().eval(w),
            w,
            dv,
        ]
    }

    /// State from `w = r^θ·ws` and `v' = r^γ·dvs`, formed without evaluating
    /// `w` or `v'`, which may underflow.
    fn state_from_scaled(&self, r: f64, u: f64, v: f64, ws: f64, dvs: f64) -> State {
        let lr = r.ln();
        [
            ((self.delta + 1.0) * lr + self.gap * ws.ln()).exp() / self.c1,
            ((self.n1 + self.pm1 * self.gamma_v) * lr + self.pm1 * dvs.ln()).exp(),
            u,
            v,
        ]
    }
}

struct Recorder {
    r: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    dv: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, p: Point) {
        self.r.push(p.r);
        self.u.push(p.u);
        self.v.push(p.v);
        self.w.push(p.w);
        self.dv.push(p.dv);
    }

    fn last(&self) -> Point {
        let i = self.r.len() - 1;
        Point {
            r: self.r[i],
            u: self.u[i],
            v: self.v[i],
            w: self.w[i],
            dv: self.dv[i],
        }
    }

    fn truncate(&mut self, len: usize) {
        self.r.truncate(len);
        self.u.truncate(len);
        self.v.truncate(len);
        self.w.truncate(len);
        self.dv.truncate(len);
    }
}

/// Radius in `[a.r, b.r]` where the Hermite interpolant of `v` equals `level`.
fn locate_crossing(a: &Point, b: &Point, level: f64) -> Crossing {
    let vi = |x: f64| hermite(a.r, b.r, a.v, b.v, a.dv, b.dv, x);
    let (mut lo, mut hi) = (a.r, b.r);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if vi(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let t = (r - a.r) / (b.r - a.r);
    let w = if a.w > 0.0 && b.w > 0.0 {
        (a.w.ln() + t * (b.w.ln() - a.w.ln())).exp()
    } else {
        a.w + t * (b.w - a.w)
    };
    Crossing {
        threshold: level,
        r,
        u: hermite(a.r, b.r, a.u, b.u, a.w, b.w, r),
        w,
        gap: f64::NAN,
    }
}

/// Gap ratio and extrapolated radius when the last crossings converge geometrically.
fn geometric_limit(crossings: &[Crossing]) -> Option<(f64, f64)> {
    if crossings.len() < MIN_CROSSINGS {
        return None;
    }
    let k = crossings.len();
    let gaps: Vec<f64> = crossings[k - 3..].iter().map(|c| c.gap).collect();
    if gaps.iter().any(|&g| !(g > 0.0)) {
        return None;
    }
    let rho1 = gaps[1] / gaps[0];
    let rho2 = gaps[2] / gaps[1];
    if rho1 < MAX_GAP_RATIO && rho2 < MAX_GAP_RATIO && (rho1 - rho2).abs() < RATIO_AGREEMENT {
        let r0 = crossings[k - 1].r + gaps[2] * rho2 / (1.0 - rho2);
        Some((rho2, r0))
    } else {
        None
    }
}

fn diagnostics(crossings: Vec<Crossing>, rho: f64) -> BlowUpDiagnostics {
    let k = crossings.len();
    let (a, b) = (&crossings[k - 2], &crossings[k - 1]);
    // Distances to R0 from the geometric tail, not from differences of radii.
    let d_last = b.gap * rho / (1.0 - rho);
    let w_tail_exponent = (b.w / a.w).ln() / ((d_last + b.gap) / d_last).ln();
    let c = &crossings[k - 3];
    let u_increment_ratio = (b.u - a.u) / (a.u - c.u);
    BlowUpDiagnostics {
        crossings,
        gap_ratio: rho,
        w_tail_exponent,
        u_increment_ratio,
    }
}

/// Solves from `r = 0` with `u(0) = u0`, `v(0) = v0` until the target
/// radius, detected blow-up of `v`, or step underflow.
///
/// Marching is in `r` until the accepted step falls below `10⁻⁷·r`; from
/// there on `τ = ln v` is the independent variable and the state carries
/// `r` as an offset from the last threshold crossing, so gaps between
/// crossings keep full relative precision even when they are far below the
/// resolution of `r` itself.
pub fn march(spec: &ProblemSpec, u0: f64, v0: f64, opts: &SolverOptions) -> Result<RadialSolution, SolverError> {
    opts.validate()?;
    if !(u0 > 0.0 && v0 > 0.0) {
        return Err(SolverError::NonPositiveInitial { u0, v0 });
    }
    let model = Model::new(spec)?;
    let seg = picard_bootstrap(spec, u0, v0, opts.bootstrap_radius(), BootstrapOptions::default())?;
    let rho = *seg.r.last().unwrap();
    if seg.v.iter().any(|&v| v > opts.blowup_threshold) {
        return Err(SolverError::BootstrapBlowUp { radius: rho });
    }

    let mut rec = Recorder {
        r: seg.r.clone(),
        u: seg.u.clone(),
        v: seg.v.clone(),
        w: seg.w.clone(),
        dv: seg.dv.clone(),
    };
    let start = rec.last();
    let mut m = Marcher {
        model: &model,
        opts,
        tol: opts.rel_tol,
        iter_tol: 1e-3 * opts.rel_tol,
        snap: 1e-12 * opts.target_radius,
        accepted: 0,
        rejected: 0,
        crossings: Vec::new(),
        next_level: opts.blowup_threshold,
        last_cross: None,
        first_over: None,
        probe: start,
        rec: &mut rec,
    };
    let mut phase = Phase::Radius {
        r: start.r,
        y: model.state_from_scaled(start.r, start.u, start.v, *seg.w_scaled.last().unwrap(), *seg.dv_scaled.last().unwrap()),
        h: opts.initial_step.min(opts.target_radius - start.r),
    };
    let outcome = loop {
        phase = match m.run(phase) {
            Step::Continue(next) => next,
            Step::Done(outcome) => break outcome,
        };
    };

    let end_state = m.probe;
    let first_over = m.first_over;
    let accepted = m.accepted;
    let rejected = m.rejected;
    let crossings = std::mem::take(&mut m.crossings);
    let (terminated, r0, blowup, mut note) = match outcome {
        Outcome::Target => (Termination::ReachedTarget, None, None, None),
        Outcome::BlowUp { rho, r0 } => (Termination::BlowUp, Some(r0), Some(diagnostics(crossings.clone(), rho)), None),
        Outcome::Underflow(msg) => (Termination::StepUnderflow, None, None, Some(msg)),
    };
    if terminated == Termination::BlowUp {
        if let Some(i) = first_over {
            rec.truncate(i + 1);
        }
    } else if !crossings.is_empty() && terminated == Termination::ReachedTarget {
        note = Some(format!(
            "v passed {} threshold levels without geometric convergence of crossing radii",
            crossings.len()
        ));
    }

    Ok(RadialSolution {
        spec: spec.clone(),
        u0,
        v0,
        threshold: opts.blowup_threshold,
        r: rec.r,
        u: rec.u,
        v: rec.v,
        w: rec.w,
        dv: rec.dv,
        r0,
        terminated,
        end_state,
        blowup,
        bootstrap_radius: rho,
        accepted_steps: accepted,
        rejected_steps: rejected,
        note,
    })
}

/// Accepted steps in `r` below this fraction of `r` trigger the switch to `τ = ln v`.
const SWITCH_TO_LOG_V: f64 = 1e-7;
/// Steps in `r` above this fraction of `r` while in `τ` switch back.
const SWITCH_TO_RADIUS: f64 = 1e-4;
const MIN_LOG_STEP: f64 = 1e-12;

enum Phase {
    Radius {
        r: f64,
        y: State,
        h: f64,
    },
    /// State `(r − r_ref, P, Q, u)` as a function of `τ = ln v`.
    LogV {
        tau: f64,
        z: State,
        r_ref: f64,
        /// `r_ref` minus the last crossing radius.
        carry: f64,
        dtau: f64,
    },
}

enum Outcome {
    Target,
    BlowUp { rho: f64, r0: f64 },
    Underflow(String),
}

enum Step {
    Continue(Phase),
    Done(Outcome),
}

/// One step-doubling trapezoidal step; returns the extrapolated state and
/// the error ratio (accept iff `≤ 1`).
fn doubled_step<F: Fn(f64, &State) -> State>(
    rhs: &F,
    t: f64,
    y: &State,
    f0: &State,
    h: f64,
    tol: f64,
    iter_tol: f64,
) -> Option<(State, f64)> {
    let (y_full, _) = trapezoid(rhs, t, y, f0, h, iter_tol)?;
    let (y1, f1) = trapezoid(rhs, t, y, f0, 0.5 * h, iter_tol)?;
    let (y_half, _) = trapezoid(rhs, t + 0.5 * h, &y1, &f1, 0.5 * h, iter_tol)?;
    let mut ratio = 0.0_f64;
    let mut y_new = [0.0; 4];
    for i in 0..4 {
        let err = (y_half[i] - y_full[i]).abs() / 3.0;
        let scale = y_half[i].abs().max(y[i].abs()).max(f64::MIN_POSITIVE);
        ratio = ratio.max(err / (tol * scale));
        y_new[i] = y_half[i] + (y_half[i] - y_full[i]) / 3.0;
    }
    if y_new.iter().all(|x| x.is_finite()) && ratio.is_finite() {
        Some((y_new, ratio))
    } else {
        None
    }
}

/// Implicit trapezoidal step solved by fixed-point iteration.
fn trapezoid<F: Fn(f64, &State) -> State>(rhs: &F, t: f64, y: &State, f0: &State, h: f64, tol: f64) -> Option<(State, State)> {
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = y[i] + h * f0[i];
    }
    for _ in 0..60 {
        let f1 = rhs(t + h, &next);
        let mut cand = [0.0; 4];
        let mut change = 0.0_f64;
        for i in 0..4 {
            cand[i] = y[i] + 0.5 * h * (f0[i] + f1[i]);
            let scale = cand[i].abs().max(f64::MIN_POSITIVE);
            change = change.max((cand[i] - next[i]).abs() / scale);
        }
        if !cand.iter().all(|x| x.is_finite()) {
            return None;
        }
        next = cand;
        if change <= tol {
            return Some((next, rhs(t + h, &next)));
        }
    }
    None
}

fn growth_factor(ratio: f64) -> f64 {
    let grow = if ratio > 0.0 { 0.9 * ratio.powf(-1.0 / 3.0) } else { 2.0 };
    grow.clamp(0.2, 2.0)
}

struct Marcher<'a, 'b> {
    model: &'a Model<'a>,
    opts: &'a SolverOptions,
    tol: f64,
    iter_tol: f64,
    snap: f64,
    accepted: usize,
    rejected: usize,
    crossings: Vec<Crossing>,
    next_level: f64,
    last_cross: Option<f64>,
    first_over: Option<usize>,
    probe: Point,
    rec: &'b mut Recorder,
}

impl Marcher<'_, '_> {
    fn run(&mut self, phase: Phase) -> Step {
        match phase {
            Phase::Radius { r, y, h } => self.run_radius(r, y, h),
            Phase::LogV { tau, z, r_ref, carry, dtau } => self.run_log_v(tau, z, r_ref, carry, dtau),
        }
    }

    fn budget_exhausted(&self) -> bool {
        self.accepted + self.rejected >= self.opts.max_steps
    }

    fn store(&mut self, p: Point) {
        if p.r <= self.rec.last().r {
            return;
        }
        self.rec.push(p);
        if self.first_over.is_none() && p.v > self.opts.blowup_threshold {
            self.first_over = Some(self.rec.r.len() - 1);
        }
    }

    /// Records a crossing; returns the blow-up outcome once the gaps converge.
    fn cross(&mut self, mut c: Crossing, gap: Option<f64>) -> Option<Outcome> {
        c.gap = gap.unwrap_or(f64::NAN);
        self.last_cross = Some(c.r);
        self.crossings.push(c);
        self.next_level *= 2.0;
        geometric_limit(&self.crossings).map(|(rho, r0)| Outcome::BlowUp { rho, r0 })
    }

    fn run_radius(&mut self, mut r: f64, mut y: State, mut h: f64) -> Step {
        let model = self.model;
        let rhs = |t: f64, s: &State| model.rhs(t, s);
        let target = self.opts.target_radius;
        let mut f = rhs(r, &y);
        loop {
            if target - r <= self.snap {
                return Step::Done(Outcome::Target);
            }
            if self.budget_exhausted() {
                return Step::Done(Outcome::Underflow(format!("step budget of {} exhausted at r = {r}", self.opts.max_steps)));
            }
            if target - r - h <= self.snap {
                h = target - r;
            }
            if h < self.opts.min_step {
                return Step::Done(Outcome::Underflow(format!("step {h:e} fell below min_step at r = {r}, v = {:e}", y[3])));
            }
            let Some((y_new, ratio)) = doubled_step(&rhs, r, &y, &f, h, self.tol, self.iter_tol).filter(|s| s.1 <= 1.0) else {
                self.rejected += 1;
                h *= 0.5;
                continue;
            };
            self.accepted += 1;
            let prev = self.probe;
            r += h;
            y = y_new;
            f = rhs(r, &y);
            let (w, dv) = model.derived(r, &y);
            let point = Point { r, u: y[2], v: y[3], w, dv };
            self.probe = point;
            self.store(point);

            let mut declared = None;
            while point.v > self.next_level {
                let c = locate_crossing(&prev, &point, self.next_level);
                let gap = self.last_cross.map(|l| c.r - l);
                if let Some(o) = self.cross(c, gap) {
                    declared = Some(o);
                }
            }
            if let Some(o) = declared {
                return Step::Done(o);
            }
            h *= growth_factor(ratio);
            if h < SWITCH_TO_LOG_V * r && target - r > self.snap {
                let ell = dv / point.v;
                return Step::Continue(Phase::LogV {
                    tau: point.v.ln(),
                    z: [0.0, y[0], y[1], y[2]],
                    r_ref: r,
                    carry: self.last_cross.map_or(f64::NAN, |l| r - l),
                    dtau: h * ell,
                });
            }
        }
    }

    fn run_log_v(&mut self, mut tau: f64, mut z: State, mut r_ref: f64, mut carry: f64, mut dtau: f64) -> Step {
        let model = self.model;
        let target = self.opts.target_radius;
        loop {
            let rhs = |t: f64, s: &State| -> State {
                let v = t.exp();
                let r = r_ref + s[0];
                let y = [s[1], s[2], s[3], v];
                let (w, dv) = model.derived(r, &y);
                let inv_ell = v / dv;
                let f = model.rhs(r, &y);
                [inv_ell, f[0] * inv_ell, f[1] * inv_ell, w * inv_ell]
            };
            if self.budget_exhausted() {
                return Step::Done(Outcome::Underflow(format!(
                    "step budget of {} exhausted at r = {}",
                    self.opts.max_steps,
                    r_ref + z[0]
                )));
            }
            let f = rhs(tau, &z);
            let level_tau = self.next_level.ln();
            let landing = tau + dtau >= level_tau;
            let step = if landing { level_tau - tau } else { dtau };
            if step < MIN_LOG_STEP && !landing {
                return Step::Done(Outcome::Underflow(format!(
                    "log-v step {step:e} underflowed at r = {}, v = {:e}",
                    r_ref + z[0],
                    tau.exp()
                )));
            }
            let Some((z_new, ratio)) = doubled_step(&rhs, tau, &z, &f, step, self.tol, self.iter_tol).filter(|s| s.1 <= 1.0) else {
                self.rejected += 1;
                dtau = 0.5 * step;
                continue;
            };
            self.accepted += 1;
            let dr = z_new[0] - z[0];
            tau = if landing { level_tau } else { tau + step };
            z = z_new;
            let v = if landing { self.next_level } else { tau.exp() };
            let r = r_ref + z[0];
            let y = [z[1], z[2], z[3], v];
            let (w, dv) = model.derived(r, &y);
            let point = Point { r, u: z[3], v, w, dv };
            self.probe = point;
            self.store(point);

            if landing {
                let gap = (!carry.is_nan()).then(|| carry + z[0]);
                let c = Crossing { threshold: v, r, u: point.u, w, gap: f64::NAN };
                if let Some(o) = self.cross(c, gap) {
                    return Step::Done(o);
                }
                r_ref = r;
                carry = 0.0;
                z[0] = 0.0;
            }
            if r >= target - self.snap {
                return Step::Done(Outcome::Target);
            }
            dtau = step * growth_factor(ratio);
            if dr > SWITCH_TO_RADIUS * r {
                let y = [z[1], z[2], z[3], v];
                return Step::Continue(Phase::Radius {
                    r,
                    y,
                    h: (dr * growth_factor(ratio)).min(target - r),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(h: &str) -> ProblemSpec {
        ProblemSpec::from_strs(2.0, 0.0, 3, ["1", "1", "t", "1", h]).unwrap()
    }

    #[test]
    fn geometric_limit_recovers_power_law_radius() {
        // v = (1 − r)^{−2}: crossings of T·2^k sit at 1 − (T·2^k)^{−1/2}.
        let radius = |k: i32| 1.0 - (1e8 * 2f64.powi(k)).powf(-0.5);
        let cs: Vec<Crossing> = (0..8)
            .map(|k| Crossing {
                threshold: 1e8 * 2f64.powi(k),
                r: radius(k),
                u: 0.0,
                w: 1.0,
                gap: radius(k) - radius(k - 1),
            })
            .collect();
        let (rho, r0) = geometric_limit(&cs).unwrap();
        assert!((rho - 2f64.powf(-0.5)).abs() < 1e-9);
        assert!((r0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_growth_is_not_blow_up() {
        let cs: Vec<Crossing> = (0..10)
            .map(|k| Crossing { threshold: 0.0, r: 10.0 + 0.69 * k as f64, u: 0.0, w: 1.0, gap: 0.69 })
            .collect();
        assert!(geometric_limit(&cs).is_none());
    }

    #[test]
    fn linear_coupling_reaches_target() {
        let sol = march(&spec("t"), 1.0, 1.0, &SolverOptions::new(5.0)).unwrap();
        assert_eq!(sol.terminated, Termination::ReachedTarget);
        assert!((sol.r_end() - 5.0).abs() < 1e-12);
        assert!(sol.r.windows(2).all(|w| w[1] > w[0]));
        assert!(sol.u.windows(2).all(|w| w[1] >= w[0]));
        assert!(sol.v.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn strong_coupling_blows_up() {
        let sol = march(&spec("t^6"), 1.0, 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.terminated, Termination::BlowUp, "{:?}", sol.note);
        let r0 = sol.r0.unwrap();
        assert!(r0 > sol.r_end());
        assert!(*sol.v.last().unwrap() > 1e8);
        let d = sol.blowup.as_ref().unwrap();
        assert!((d.w_tail_exponent - 0.6).abs() < 0.05, "{d:?}");
    }

    #[test]
    fn rejects_alpha_beyond_gap() {
        let s = ProblemSpec::from_strs(2.0, 1.5, 3, ["1", "1", "t", "1", "t"]).unwrap();
        assert!(matches!(march(&s, 1.0, 1.0, &SolverOptions::default()), Err(SolverError::Spec(_))));
    }
}
