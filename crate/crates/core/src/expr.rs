//! Non-negative power sums `Σ cᵢ·t^eᵢ` used for every scalar function of a problem.
//!
//! The grammar is deliberately small:
//!
//! ```text
//! expr := term ('+' term)*
//! term := NUM | NUM '*' 't^' NUM | NUM '*' 't' | 't^' NUM | 't'
//! ```
//!
//! `NUM` is a non-negative decimal literal (an optional exponent suffix such as
//! `1e-3` is accepted). Terms with equal exponents are merged, zero coefficients
//! are dropped and the remaining terms are kept sorted by exponent, so two
//! expressions denoting the same function compare equal.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// One `coeff·t^exponent` term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub coeff: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("negative coefficient at column {column}")]
    Negative { column: usize },
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("expression is identically zero")]
    AllZero,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("term {index} has invalid coefficient {coeff}")]
    BadCoefficient { index: usize, coeff: f64 },
    #[error("term {index} has invalid exponent {exponent}")]
    BadExponent { index: usize, exponent: f64 },
    #[error("expression is identically zero")]
    AllZero,
}

/// A parsed power sum in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct FuncExpr {
    terms: Vec<Term>,
    source: String,
}

/// Leading behaviour of a power sum at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthProfile {
    pub leading_exponent: f64,
    pub leading_coeff: f64,
}

impl FuncExpr {
    /// Builds a canonical power sum from raw terms.
    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Result<Self, ExprError> {
        let mut raw: Vec<Term> = Vec::new();
        for (index, t) in terms.into_iter().enumerate() {
            if !t.coeff.is_finite() || t.coeff < 0.0 {
                return Err(ExprError::BadCoefficient { index, coeff: t.coeff });
            }
            if !t.exponent.is_finite() || t.exponent < 0.0 {
                return Err(ExprError::BadExponent { index, exponent: t.exponent });
            }
            raw.push(t);
        }
        let terms = canonicalize(raw);
        if terms.is_empty() {
            return Err(ExprError::AllZero);
        }
        let source = render(&terms);
        Ok(Self { terms, source })
    }

    /// `c·t^e`
    pub fn monomial(coeff: f64, exponent: f64) -> Result<Self, ExprError> {
        Self::from_terms([Term { coeff, exponent }])
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let raw = Parser::new(text).parse()?;
        let terms = canonicalize(raw);
        if terms.is_empty() {
            return Err(ParseError::AllZero);
        }
        Ok(Self {
            terms,
            source: text.trim().to_string(),
        })
    }

    /// Terms with positive coefficients, ascending by exponent.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// The text this expression was parsed from (or its canonical rendering).
    pub fn source_text(&self) -> &str {
        &self.source
    }

    pub fn is_single_term(&self) -> bool {
        self.terms.len() == 1
    }

    /// `Σ cᵢ·t^eᵢ` with `0^0 = 1`.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0, "power sums are evaluated on [0, ∞)");
        self.terms.iter().map(|term| term.coeff * t.powf(term.exponent)).sum()
    }

    /// Natural logarithm of the value, stable for arguments where the sum
    /// would overflow. Returns `-inf` where the sum vanishes.
    pub fn ln_eval(&self, t: f64) -> f64 {
        if t == 0.0 {
            return self.eval(0.0).ln();
        }
        let lt = t.ln();
        log_sum_exp(self.terms.iter().map(|term| term.coeff.ln() + term.exponent * lt))
    }

    pub fn leading(&self) -> Term {
        *self.terms.last().expect("canonical power sums are non-empty")
    }

    pub fn lowest(&self) -> Term {
        self.terms[0]
    }

    /// Growth order `k` with `g(t)/t^k` non-increasing and a positive limit.
    pub fn derive_k(&self) -> GrowthProfile {
        let lead = self.leading();
        GrowthProfile {
            leading_exponent: lead.exponent,
            leading_coeff: lead.coeff,
        }
    }

    /// `t ↦ factor·f(t)`
    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| Term {
            coeff: t.coeff * factor,
            exponent: t.exponent,
        }))
        .expect("positive rescaling keeps a power sum valid")
    }

    /// `t ↦ f(λ·t)`
    pub fn with_scaled_argument(&self, lambda: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| Term {
            coeff: t.coeff * lambda.powf(t.exponent),
            exponent: t.exponent,
        }))
        .expect("positive argument scaling keeps a power sum valid")
    }

    /// `t ↦ ∫₀ᵗ f(s^θ) ds`, again a power sum.
    pub fn integral_of_power_composite(&self, theta: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| {
            let e = theta * t.exponent + 1.0;
            Term {
                coeff: t.coeff / e,
                exponent: e,
            }
        }))
        .expect("antiderivative of a power sum is a power sum")
    }

    /// Samples `f` on a log grid and reports whether it is non-decreasing.
    pub fn is_nondecreasing_on_log_grid(&self, lo_decade: i32, hi_decade: i32, per_decade: usize) -> bool {
        let mut prev = self.eval(0.0);
        let steps = (hi_decade - lo_decade) as usize * per_decade;
        for i in 0..=steps {
            let t = 10f64.powf(lo_decade as f64 + i as f64 / per_decade as f64);
            let val = self.eval(t);
            if val < prev {
                return false;
            }
            prev = val;
        }
        true
    }
}

impl fmt::Display for FuncExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.terms))
    }
}

impl FromStr for FuncExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for FuncExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn canonicalize(mut raw: Vec<Term>) -> Vec<Term> {
    raw.retain(|t| t.coeff > 0.0);
    raw.sort_by(|a, b| a.exponent.total_cmp(&b.exponent));
    let mut out: Vec<Term> = Vec::with_capacity(raw.len());
    for t in raw {
        match out.last_mut() {
            Some(last) if last.exponent == t.exponent => last.coeff += t.coeff,
            _ => out.push(t),
        }
    }
    out
}

fn render(terms: &[Term]) -> String {
    let parts: Vec<String> = terms
        .iter()
        .map(|t| match (t.coeff == 1.0, t.exponent) {
            (_, e) if e == 0.0 => format!("{}", t.coeff),
            (true, e) if e == 1.0 => "t".to_string(),
            (true, e) => format!("t^{e}"),
            (false, e) => format!("{}*t^{e}", t.coeff),
        })
        .collect();
    parts.join(" + ")
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn column(&self) -> usize {
        self.src[..self.pos].chars().count() + 1
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            column: self.column(),
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Vec<Term>, ParseError> {
        self.skip_ws();
        if self.peek().is_none() {
            return Err(ParseError::Empty);
        }
        let mut terms = vec![self.term()?];
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(terms),
                Some(b'+') => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(b'-') => return Err(ParseError::Negative { column: self.column() }),
                Some(_) => return Err(self.syntax("expected '+' or end of expression")),
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.syntax("expected a term")),
            Some(b'-') => Err(ParseError::Negative { column: self.column() }),
            Some(b't') => {
                let exponent = self.power()?;
                Ok(Term { coeff: 1.0, exponent })
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let coeff = self.number()?;
                self.skip_ws();
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek() != Some(b't') {
                        return Err(self.syntax("expected 't' after '*'"));
                    }
                    let exponent = self.power()?;
                    Ok(Term { coeff, exponent })
                } else {
                    Ok(Term { coeff, exponent: 0.0 })
                }
            }
            Some(_) => Err(self.syntax("expected a number or 't'")),
        }
    }

    /// Parses `t` or `t^NUM`; the cursor sits on `t`.
    fn power(&mut self) -> Result<f64, ParseError> {
        self.pos += 1;
        self.skip_ws();
        if self.peek() != Some(b'^') {
            return Ok(1.0);
        }
        self.pos += 1;
        self.skip_ws();
        if self.peek() == Some(b'-') {
            return Err(ParseError::Negative { column: self.column() });
        }
        self.number()
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let start_col = self.column();
        let mut digits = 0;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits += 1;
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    digits += 1;
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        if digits == 0 {
            self.pos = start;
            return Err(self.syntax("expected a number"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == exp_start {
                self.pos = mark;
                return Err(self.syntax("malformed exponent"));
            }
        }
        self.src[start..self.pos].parse::<f64>().map_err(|e| ParseError::Syntax {
            column: start_col,
            message: e.to_string(),
        })
    }
}
