//! Problem data for the radial system
//!
//! ```text
//! Δₚu = f₁(|x|) g₁(v) |∇u|^α
//! Δₚv = f₂(|x|) g₂(v) h(|∇u|)
//! ```
//!
//! together with the growth-condition checks on `g₁, g₂` and the derived
//! exponents `θ = 1/(p−1−α)` and `δ = (n−1)(p−1−α)/(p−1)`.

use serde::Serialize;
use thiserror::Error;

use crate::expr::FuncExpr;

/// The five scalar functions of a problem, before validation.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub p: f64,
    pub alpha: f64,
    pub n: u32,
    pub f1: FuncExpr,
    pub f2: FuncExpr,
    pub g1: FuncExpr,
    pub g2: FuncExpr,
    pub h: FuncExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Issue {
    PNotAboveOne { p: f64 },
    NegativeAlpha { alpha: f64 },
    DimensionTooSmall { n: u32 },
    /// `g₁` must grow at least like a positive power.
    K1NotPositive,
    /// `g₂` may not outgrow `g₁`.
    K2ExceedsK1 { k1: f64, k2: f64 },
    /// Sampled values of the named function decreased somewhere.
    NotMonotone { function: &'static str },
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Issue::PNotAboveOne { p } => write!(f, "p must exceed 1 (got {p})"),
            Issue::NegativeAlpha { alpha } => write!(f, "alpha must be non-negative (got {alpha})"),
            Issue::DimensionTooSmall { n } => write!(f, "n must be at least 2 (got {n})"),
            Issue::K1NotPositive => write!(f, "(A2) requires k1 > 0: g1 must contain a positive power of t"),
            Issue::K2ExceedsK1 { k1, k2 } => write!(f, "(A2) requires 0 <= k2 <= k1 (got k1 = {k1}, k2 = {k2})"),
            Issue::NotMonotone { function } => write!(f, "{function} is not non-decreasing on the sample grid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub k1: f64,
    pub k2: f64,
    /// Non-negative power sums are continuous and non-decreasing by construction.
    pub monotone_structural: bool,
    pub monotone_sampled: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid (k1 = {}, k2 = {})", self.k1, self.k2);
        }
        let msgs: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Checks the structural assumptions and growth conditions, listing every problem found.
pub fn validate_assumptions(c: &Candidate) -> ValidationReport {
    let mut issues = Vec::new();
    if c.p.is_nan() || c.p <= 1.0 {
        issues.push(Issue::PNotAboveOne { p: c.p });
    }
    if c.alpha.is_nan() || c.alpha < 0.0 {
        issues.push(Issue::NegativeAlpha { alpha: c.alpha });
    }
    if c.n < 2 {
        issues.push(Issue::DimensionTooSmall { n: c.n });
    }
    let k1 = c.g1.derive_k().leading_exponent;
    let k2 = c.g2.derive_k().leading_exponent;
    if k1 <= 0.0 {
        issues.push(Issue::K1NotPositive);
    }
    if k2 > k1 {
        issues.push(Issue::K2ExceedsK1 { k1, k2 });
    }
    let mut monotone_sampled = true;
    for (name, func) in [("f1", &c.f1), ("f2", &c.f2), ("g1", &c.g1), ("g2", &c.g2), ("h", &c.h)] {
        if !func.is_nondecreasing_on_log_grid(-3, 6, 10) {
            monotone_sampled = false;
            issues.push(Issue::NotMonotone { function: name });
        }
    }
    ValidationReport {
        k1,
        k2,
        monotone_structural: true,
        monotone_sampled,
        issues,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("invalid problem: {0}")]
    Invalid(ValidationReport),
    #[error("alpha = {alpha} >= p - 1 = {pm1}: no positive radial solutions exist")]
    AlphaTooLarge { alpha: f64, pm1: f64 },
}

/// A validated problem. `alpha ≥ p − 1` is admitted here (it classifies as
/// having no solutions), but the exponent accessors then return an error.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    p: f64,
    alpha: f64,
    n: u32,
    f1: FuncExpr,
    f2: FuncExpr,
    g1: FuncExpr,
    g2: FuncExpr,
    h: FuncExpr,
    k1: f64,
    k2: f64,
}

impl ProblemSpec {
    pub fn new(c: Candidate) -> Result<Self, SpecError> {
        let report = validate_assumptions(&c);
        if !report.is_valid() {
            return Err(SpecError::Invalid(report));
        }
        Ok(Self {
            p: c.p,
            alpha: c.alpha,
            n: c.n,
            f1: c.f1,
            f2: c.f2,
            g1: c.g1,
            g2: c.g2,
            h: c.h,
            k1: report.k1,
            k2: report.k2,
        })
    }

    /// Convenience constructor from expression strings; panics on malformed text.
    pub fn from_strs(p: f64, alpha: f64, n: u32, funcs: [&str; 5]) -> Result<Self, SpecError> {
        let parse = |s: &str| FuncExpr::parse(s).unwrap_or_else(|e| panic!("bad expression {s:?}: {e}"));
        Self::new(Candidate {
            p,
            alpha,
            n,
            f1: parse(funcs[0]),
            f2: parse(funcs[1]),
            g1: parse(funcs[2]),
            g2: parse(funcs[3]),
            h: parse(funcs[4]),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn f1(&self) -> &FuncExpr {
        &self.f1
    }
    pub fn f2(&self) -> &FuncExpr {
        &self.f2
    }
    pub fn g1(&self) -> &FuncExpr {
        &self.g1
    }
    pub fn g2(&self) -> &FuncExpr {
        &self.g2
    }
    pub fn h(&self) -> &FuncExpr {
        &self.h
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }

    /// `p − 1 − α`
    pub fn gap(&self) -> f64 {
        self.p - 1.0 - self.alpha
    }

    pub fn admits_solutions(&self) -> bool {
        self.gap() > 0.0
    }

    fn require_admissible(&self) -> Result<(), SpecError> {
        if self.admits_solutions() {
            Ok(())
        } else {
            Err(SpecError::AlphaTooLarge {
                alpha: self.alpha,
                pm1: self.p - 1.0,
            })
        }
    }

    /// `θ = 1/(p−1−α)`
    pub fn theta(&self) -> Result<f64, SpecError> {
        self.require_admissible()?;
        Ok(1.0 / self.gap())
    }

    /// `δ = (n−1)(p−1−α)/(p−1)`
    pub fn delta(&self) -> Result<f64, SpecError> {
        self.require_admissible()?;
        Ok((self.n as f64 - 1.0) * self.gap() / (self.p - 1.0))
    }

    /// Power `k₁p/(k₁p+p−1−k₂)` applied to the inner integral in the criteria.
    pub fn criterion_power(&self) -> f64 {
        let k1p = self.k1 * self.p;
        k1p / (k1p + self.p - 1.0 - self.k2)
    }

    /// Replaces the five functions, keeping exponents; re-validates.
    pub fn with_functions(&self, f1: FuncExpr, f2: FuncExpr, g1: FuncExpr, g2: FuncExpr, h: FuncExpr) -> Result<Self, SpecError> {
        Self::new(Candidate {
            p: self.p,
            alpha: self.alpha,
            n: self.n,
            f1,
            f2,
            g1,
            g2,
            h,
        })
    }
}
