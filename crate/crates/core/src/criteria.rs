//! Integral criteria deciding the boundary behaviour of radial solutions.
//!
//! Every criterion has the shape
//!
//! ```text
//!   ∫₁^∞ s^w ds / I(s)^ν,   I(s) = ∫₀ˢ h(t^θ)^{1/p} dt,   ν = k₁p/(k₁p+p−1−k₂)
//! ```
//!
//! with `w = 0` (unweighted) or `w = θ` (weighted). For power-sum `h` the
//! verdict follows from the leading exponent alone; values are computed by
//! adaptive quadrature in the variable `y = ln s`, with `I` factored as
//! `s^κ·J(s)` so nothing overflows however far out the tail reaches.

use serde::Serialize;
use thiserror::Error;

use crate::expr::FuncExpr;
use crate::problem::{ProblemSpec, SpecError};
use crate::quad::{integrate, QuadOptions};

/// Relative tolerance used to recognise the borderline exponent `E = −1`
/// despite rounding in the exponent arithmetic.
pub const BORDERLINE_REL_TOL: f64 = 1e-12;
/// Numeric slopes this close to −1 are refused.
pub const NUMERIC_BORDERLINE: f64 = 1e-6;
/// Sampling window of the numeric heuristic.
pub const NUMERIC_WINDOW: (f64, f64) = (1e3, 1e6);
pub const NUMERIC_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("borderline undecidable: numeric slope {slope} is within 1e-6 of -1")]
    Borderline { slope: f64 },
    #[error("Φ undefined: the unweighted criterion integral diverges")]
    PhiUndefined,
    #[error("quadrature did not converge ({context})")]
    Quadrature { context: &'static str },
    #[error("argument out of range: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Finite,
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Symbolic,
    NumericHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriterionKind {
    Unweighted,
    /// Integrand multiplied by `s^θ`.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceVerdict {
    pub verdict: Verdict,
    /// `∫₁^∞` of the integrand, present iff the verdict is finite.
    pub value: Option<f64>,
    /// Asymptotic log-log slope of the integrand, present iff the verdict is infinite.
    pub divergence_exponent: Option<f64>,
    pub method: Method,
    /// Asymptotic (symbolic) or fitted (numeric) exponent of the integrand.
    pub exponent: f64,
}

impl ConvergenceVerdict {
    pub fn is_finite(&self) -> bool {
        self.verdict == Verdict::Finite
    }
}

/// `θ = 1/(p−1−α)`
pub fn theta(spec: &ProblemSpec) -> Result<f64, CriteriaError> {
    Ok(spec.theta()?)
}

/// `H_θ(t) = ∫₀ᵗ h(s^θ) ds` via its antiderivative.
pub fn h_theta(h: &FuncExpr, theta: f64, t: f64) -> f64 {
    h.integral_of_power_composite(theta).eval(t)
}

/// `I(s) = ∫₀ˢ h(t^θ)^{1/p} dt`
pub fn inner_integral(h: &FuncExpr, theta: f64, p: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    InnerIntegral::new(h, theta, p).ln_value(s.ln()).exp()
}

/// `I(s)` for a power-sum `h`, evaluated in logarithmic form.
#[derive(Debug, Clone)]
pub struct InnerIntegral<'a> {
    h: &'a FuncExpr,
    theta: f64,
    p: f64,
    /// Substitution power `x = z^m` that flattens the integrand at the origin.
    sub_power: f64,
}

impl<'a> InnerIntegral<'a> {
    pub fn new(h: &'a FuncExpr, theta: f64, p: f64) -> Self {
        let e_min = h.lowest().exponent;
        Self {
            h,
            theta,
            p,
            sub_power: 1.0 / (theta * e_min / p + 1.0),
        }
    }

    /// Growth exponent `κ = θ·q/p + 1` of `I` at infinity.
    pub fn growth(&self) -> f64 {
        self.theta * self.h.leading().exponent / self.p + 1.0
    }

    /// `ln I(e^y)`
    pub fn ln_value(&self, y: f64) -> f64 {
        let reference = if self.h.is_single_term() || y >= 0.0 {
            self.h.leading()
        } else {
            self.h.lowest()
        };
        let kappa = self.theta * reference.exponent / self.p + 1.0;
        kappa * y + self.ln_profile(y, reference.exponent, kappa)
    }

    /// `ln J` where `I(s) = s^κ J(s)` relative to the reference exponent.
    fn ln_profile(&self, y: f64, e_ref: f64, kappa: f64) -> f64 {
        if self.h.is_single_term() {
            let t = self.h.leading();
            return t.coeff.ln() / self.p - kappa.ln();
        }
        let theta = self.theta;
        let p = self.p;
        let m = self.sub_power;
        let scaled: Vec<(f64, f64)> = self
            .h
            .terms()
            .iter()
            .map(|t| (t.coeff * (theta * (t.exponent - e_ref) * y).exp(), theta * t.exponent))
            .collect();
        let integrand = |z: f64| {
            if z <= 0.0 {
                return 0.0;
            }
            let x = z.powf(m);
            let inner: f64 = scaled.iter().map(|&(c, e)| c * x.powf(e)).sum();
            m * z.powf(m - 1.0) * inner.powf(1.0 / p)
        };
        let r = integrate(
            integrand,
            0.0,
            1.0,
            QuadOptions {
                rel_tol: 1e-12,
                ..QuadOptions::default()
            },
        );
        r.value.ln()
    }
}

/// `∫ s^w / I(s)^ν ds` over tails of `[1, ∞)`.
#[derive(Debug, Clone)]
pub struct OuterIntegral<'a> {
    inner: InnerIntegral<'a>,
    power: f64,
    weight: f64,
}

impl<'a> OuterIntegral<'a> {
    pub fn new(h: &'a FuncExpr, theta: f64, p: f64, power: f64, weight: f64) -> Self {
        Self {
            inner: InnerIntegral::new(h, theta, p),
            power,
            weight,
        }
    }

    pub fn for_spec(spec: &'a ProblemSpec, kind: CriterionKind) -> Result<Self, CriteriaError> {
        let theta = spec.theta()?;
        let weight = match kind {
            CriterionKind::Unweighted => 0.0,
            CriterionKind::Weighted => theta,
        };
        Ok(Self::new(spec.h(), theta, spec.p(), spec.criterion_power(), weight))
    }

    /// Asymptotic exponent `E = w − κν` of the integrand.
    pub fn exponent(&self) -> f64 {
        self.weight - self.inner.growth() * self.power
    }

    /// Symbolic verdict: infinite iff `E ≥ −1`.
    pub fn verdict(&self) -> Verdict {
        let lhs = self.weight + 1.0;
        let rhs = self.inner.growth() * self.power;
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        if lhs - rhs >= -BORDERLINE_REL_TOL * scale {
            Verdict::Infinite
        } else {
            Verdict::Finite
        }
    }

    /// `ln` of the integrand at `s = e^y`.
    pub fn ln_integrand(&self, y: f64) -> f64 {
        self.weight * y - self.power * self.inner.ln_value(y)
    }

    /// Closed form `∫_{e^y}^∞` when `h` is a single power.
    fn closed_form_tail(&self, y: f64) -> Option<f64> {
        if !self.inner.h.is_single_term() {
            return None;
        }
        let mu = -(self.exponent() + 1.0);
        // integrand = e^{ln_integrand(y)} exactly a power of s
        Some((self.ln_integrand(y) + y).exp() / mu)
    }

    /// `∫_{e^{y0}}^∞ s^w I(s)^{−ν} ds` by adaptive quadrature in `y = ln s`.
    pub fn tail_by_quadrature(&self, y0: f64) -> Result<f64, CriteriaError> {
        if self.verdict() == Verdict::Infinite {
            return Err(CriteriaError::Domain("tail of a divergent criterion".into()));
        }
        let mu = -(self.exponent() + 1.0);
        let width = (1.0 / mu).clamp(0.5, 50.0);
        let integrand = |y: f64| (y + self.ln_integrand(y)).exp();
        let opts = QuadOptions {
            rel_tol: 1e-12,
            ..QuadOptions::default()
        };
        let mut total = 0.0;
        let mut y = y0;
        for _ in 0..20_000 {
            let r = integrate(integrand, y, y + width, opts);
            if !r.converged {
                return Err(CriteriaError::Quadrature { context: "criterion tail panel" });
            }
            total += r.value;
            y += width;
            // Past here the integrand is within rounding of A·e^{−μ y}.
            let rest = integrand(y) / mu;
            if rest <= 1e-14 * total {
                return Ok(total + rest);
            }
        }
        Err(CriteriaError::Quadrature { context: "criterion tail did not decay" })
    }

    /// Tail integral from `t`, using the closed form when one exists.
    pub fn tail(&self, t: f64) -> Result<f64, CriteriaError> {
        if self.verdict() == Verdict::Infinite {
            return Err(CriteriaError::Domain("tail of a divergent criterion".into()));
        }
        match self.closed_form_tail(t.ln()) {
            Some(v) => Ok(v),
            None => self.tail_by_quadrature(t.ln()),
        }
    }
}

/// Symbolic verdict of a criterion, with its value from adaptive quadrature when finite.
pub fn criterion(spec: &ProblemSpec, kind: CriterionKind) -> Result<ConvergenceVerdict, CriteriaError> {
    let outer = OuterIntegral::for_spec(spec, kind)?;
    let exponent = outer.exponent();
    Ok(match outer.verdict() {
        Verdict::Infinite => ConvergenceVerdict {
            verdict: Verdict::Infinite,
            value: None,
            divergence_exponent: Some(exponent),
            method: Method::Symbolic,
            exponent,
        },
        Verdict::Finite => ConvergenceVerdict {
            verdict: Verdict::Finite,
            value: Some(outer.tail_by_quadrature(0.0)?),
            divergence_exponent: None,
            method: Method::Symbolic,
            exponent,
        },
    })
}

/// Heuristic verdict for an arbitrary non-decreasing `h`: least-squares
/// log-log slope of the integrand over `[10³, 10⁶]`.
pub fn criterion_numeric<F: Fn(f64) -> f64>(
    h: F,
    theta: f64,
    p: f64,
    power: f64,
    kind: CriterionKind,
) -> Result<ConvergenceVerdict, CriteriaError> {
    let weight = match kind {
        CriterionKind::Unweighted => 0.0,
        CriterionKind::Weighted => theta,
    };
    let phi = |t: f64| h(t.powf(theta)).powf(1.0 / p);
    let opts = QuadOptions::default();
    let piece = |a: f64, b: f64| -> Result<f64, CriteriaError> {
        let r = integrate(phi, a, b, opts);
        if r.converged {
            Ok(r.value)
        } else {
            Err(CriteriaError::Quadrature { context: "numeric inner integral" })
        }
    };
    let (lo, hi) = NUMERIC_WINDOW;
    // I(lo) over decades, then incrementally across the sample points.
    let mut acc = piece(0.0, 1.0)?;
    let mut a = 1.0;
    while a < lo {
        let b = (a * 10.0).min(lo);
        acc += piece(a, b)?;
        a = b;
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut xs = Vec::with_capacity(NUMERIC_POINTS);
    let mut ys = Vec::with_capacity(NUMERIC_POINTS);
    let mut prev = lo;
    for i in 0..NUMERIC_POINTS {
        let ls = llo + (lhi - llo) * i as f64 / (NUMERIC_POINTS - 1) as f64;
        let s = ls.exp();
        acc += piece(prev, s)?;
        prev = s;
        xs.push(ls);
        ys.push(weight * ls - power * acc.ln());
    }
    let slope = least_squares_slope(&xs, &ys);
    if (slope + 1.0).abs() <= NUMERIC_BORDERLINE {
        return Err(CriteriaError::Borderline { slope });
    }
    if slope > -1.0 {
        return Ok(ConvergenceVerdict {
            verdict: Verdict::Infinite,
            value: None,
            divergence_exponent: Some(slope),
            method: Method::NumericHeuristic,
            exponent: slope,
        });
    }
    // Value: quadrature up to the window end plus a power-law tail with the fitted slope.
    let mu = -(slope + 1.0);
    let mut value = 0.0;
    let mut i_start = piece(0.0, 1.0)?;
    let panels = 48;
    for k in 0..panels {
        let a = (lhi * k as f64 / panels as f64).exp();
        let b = (lhi * (k + 1) as f64 / panels as f64).exp();
        let base = i_start;
        let integrand = |s: f64| {
            let inner = base + integrate(phi, a, s, QuadOptions { rel_tol: 1e-11, ..opts }).value;
            s.powf(weight) * inner.powf(-power)
        };
        let r = integrate(integrand, a, b, opts);
        value += r.value;
        i_start += piece(a, b)?;
    }
    let s_end = hi;
    value += s_end.powf(weight) * i_start.powf(-power) * s_end / mu;
    Ok(ConvergenceVerdict {
        verdict: Verdict::Finite,
        value: Some(value),
        divergence_exponent: None,
        method: Method::NumericHeuristic,
        exponent: slope,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `Φ(t) = ∫ₜ^∞ ds / I(s)^ν`, defined when the unweighted criterion converges.
#[derive(Debug, Clone)]
pub struct Phi<'a> {
    outer: OuterIntegral<'a>,
}

impl<'a> Phi<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self, CriteriaError> {
        let outer = OuterIntegral::for_spec(spec, CriterionKind::Unweighted)?;
        if outer.verdict() == Verdict::Infinite {
            return Err(CriteriaError::PhiUndefined);
        }
        Ok(Self { outer })
    }

    pub fn eval(&self, t: f64) -> Result<f64, CriteriaError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(CriteriaError::Domain(format!("Φ needs t > 0, got {t}")));
        }
        self.outer.tail(t)
    }

    /// Solves `Φ(t) = y` by safeguarded Newton steps in `ln t` inside a
    /// shrinking bracket; stops at relative tolerance `rel_tol` in `t`.
    pub fn inverse(&self, y: f64, rel_tol: f64) -> Result<f64, CriteriaError> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(CriteriaError::Domain(format!("Φ⁻¹ needs y > 0, got {y}")));
        }
        let target = y.ln();
        let f = |x: f64| -> Result<f64, CriteriaError> { Ok(self.eval(x.exp())?.ln() - target) };
        // Φ is decreasing, so f decreases in x = ln t.
        let (mut lo, mut hi);
        let f0 = f(0.0)?;
        let (mut f_lo, mut f_hi);
        if f0 > 0.0 {
            lo = 0.0;
            f_lo = f0;
            let mut step = 1.0;
            loop {
                hi = lo + step;
                f_hi = f(hi)?;
                if f_hi <= 0.0 {
                    break;
                }
                lo = hi;
                f_lo = f_hi;
                step *= 2.0;
                if step > 1e4 {
                    return Err(CriteriaError::Domain("Φ⁻¹ bracket search failed".into()));
                }
            }
        } else {
            hi = 0.0;
            f_hi = f0;
            let mut step = 1.0;
            loop {
                lo = hi - step;
                f_lo = f(lo)?;
                if f_lo >= 0.0 {
                    break;
                }
                hi = lo;
                f_hi = f_lo;
                step *= 2.0;
                if step > 1e4 {
                    return Err(CriteriaError::Domain("Φ⁻¹ bracket search failed".into()));
                }
            }
        }
        let mut x = if f_lo == f_hi { lo } else { lo + (hi - lo) * f_lo / (f_lo - f_hi) };
        for _ in 0..200 {
            let fx = f(x)?;
            if fx == 0.0 {
                return Ok(x.exp());
            }
            if fx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            // d ln Φ / d ln t = −t·g(t)/Φ(t)
            let t = x.exp();
            let phi = self.eval(t)?;
            let slope = -(x + self.outer.ln_integrand(x)).exp() / phi;
            let newton = x - fx / slope;
            let next = if newton > lo && newton < hi && slope.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= rel_tol * 0.1 || (hi - lo) <= rel_tol * 0.1 {
                return Ok(next.exp());
            }
            x = next;
        }
        Err(CriteriaError::Domain("Φ⁻¹ did not converge".into()))
    }
}

pub fn phi(spec: &ProblemSpec, t: f64) -> Result<f64, CriteriaError> {
    Phi::new(spec)?.eval(t)
}

pub fn phi_inverse(spec: &ProblemSpec, y: f64) -> Result<f64, CriteriaError> {
    Phi::new(spec)?.inverse(y, 1e-10)
}

/// The three ordered quantities of the `h` / `H` comparison, in value and log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub ln_lhs: f64,
    pub ln_mid: f64,
    pub ln_rhs: f64,
}

impl Sandwich {
    /// Largest relative excess of a lower quantity over the next one (≤ 0 when ordered).
    pub fn max_relative_violation(&self) -> f64 {
        let a = (self.ln_lhs - self.ln_mid).exp_m1();
        let b = (self.ln_mid - self.ln_rhs).exp_m1();
        a.max(b)
    }
}

/// `ln ∫₀^X f(t)^γ dt` for a power sum `f` with `f(0) ≥ 0`, in overflow-safe form.
fn ln_integral_of_power(f: &FuncExpr, gamma: f64, x_end: f64) -> Result<f64, CriteriaError> {
    let ln_end = f.ln_eval(x_end);
    let integrand = |x: f64| {
        if x <= 0.0 {
            let f0 = f.eval(0.0);
            return if f0 == 0.0 { 0.0 } else { (gamma * (f0.ln() - ln_end)).exp() };
        }
        (gamma * (f.ln_eval(x_end * x) - ln_end)).exp()
    };
    let r = integrate(
        integrand,
        0.0,
        1.0,
        QuadOptions {
            rel_tol: 1e-13,
            ..QuadOptions::default()
        },
    );
    if !r.converged {
        return Err(CriteriaError::Quadrature { context: "sandwich integral" });
    }
    Ok(x_end.ln() + gamma * ln_end + r.value.ln())
}

/// `(p−1)^{2p−1}(∫₀ˢH^{1/(p−1)})^{p−1} ≤ (p−1)^{p−1}(∫₀^{ps}h^{1/p})^p ≤ (∫₀^{p²s}H^{1/(p−1)})^{p−1}`
/// with `H(t) = ∫₀ᵗ h`.
pub fn sandwich_check(h: &FuncExpr, p: f64, s: f64) -> Result<Sandwich, CriteriaError> {
    if !(s > 0.0) || !(p > 1.0) {
        return Err(CriteriaError::Domain(format!("sandwich needs s > 0 and p > 1 (s = {s}, p = {p})")));
    }
    let big_h = h.integral_of_power_composite(1.0);
    let pm1 = p - 1.0;
    let gamma = 1.0 / pm1;
    let ln_lhs = (2.0 * p - 1.0) * pm1.ln() + pm1 * ln_integral_of_power(&big_h, gamma, s)?;
    let ln_mid = pm1 * pm1.ln() + p * ln_integral_of_power(h, 1.0 / p, p * s)?;
    let ln_rhs = pm1 * ln_integral_of_power(&big_h, gamma, p * p * s)?;
    Ok(Sandwich {
        lhs: ln_lhs.exp(),
        mid: ln_mid.exp(),
        rhs: ln_rhs.exp(),
        ln_lhs,
        ln_mid,
        ln_rhs,
    })
}

fn verdict_from_denominator_exponent(exponent: f64) -> Verdict {
    // ∫₁^∞ s^{−a} ds converges iff a > 1.
    if exponent - 1.0 > BORDERLINE_REL_TOL * exponent.abs().max(1.0) {
        Verdict::Finite
    } else {
        Verdict::Infinite
    }
}

/// Verdict of `∫₁^∞ ds / (∫₀ˢ h(t^θ)^{1/p} dt)^{νp}`.
pub fn h_form_verdict(h: &FuncExpr, theta: f64, p: f64, nu: f64) -> Verdict {
    let inner_growth = theta * h.leading().exponent / p + 1.0;
    verdict_from_denominator_exponent(nu * p * inner_growth)
}

/// Verdict of `∫₁^∞ ds / (∫₀ˢ H_θ(t)^{1/(p−1)} dt)^{ν(p−1)}`, derived from the
/// growth of the antiderivative `H_θ`.
pub fn big_h_form_verdict(h: &FuncExpr, theta: f64, p: f64, nu: f64) -> Verdict {
    let big_h = h.integral_of_power_composite(theta);
    let h_growth = big_h.derive_k().leading_exponent;
    let inner_growth = h_growth / (p - 1.0) + 1.0;
    verdict_from_denominator_exponent(nu * (p - 1.0) * inner_growth)
}
