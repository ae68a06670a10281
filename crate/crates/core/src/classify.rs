//! Boundary classes: prediction from the criteria, classification of computed
//! trajectories, and reconciliation of the two.

use serde::Serialize;

use crate::criteria::{criterion, ConvergenceVerdict, CriterionKind, Verdict};
use crate::problem::ProblemSpec;
use crate::solver::{RadialSolution, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundaryClass {
    /// `u` and `v` bounded.
    B1,
    /// `u` bounded, `v` blows up.
    B2,
    /// Both blow up.
    B3,
    NoSolution,
    Global,
    Undecided,
}

impl std::fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundaryClass::B1 => "B1",
            BoundaryClass::B2 => "B2",
            BoundaryClass::B3 => "B3",
            BoundaryClass::NoSolution => "NoSolution",
            BoundaryClass::Global => "Global",
            BoundaryClass::Undecided => "Undecided",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Omega {
    Ball,
    WholeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Basis {
    Theorem,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Details {
    pub unweighted: Option<ConvergenceVerdict>,
    pub weighted: Option<ConvergenceVerdict>,
    pub termination: Option<Termination>,
    pub r0: Option<f64>,
    pub w_tail_exponent: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub class: BoundaryClass,
    pub omega: Omega,
    pub basis: Basis,
    pub details: Details,
}

/// Class implied by the two criterion verdicts.
pub fn class_from_verdicts(omega: Omega, unweighted: Verdict, weighted: Verdict) -> BoundaryClass {
    match (omega, unweighted, weighted) {
        (Omega::Ball, Verdict::Infinite, Verdict::Infinite) => BoundaryClass::B1,
        (Omega::Ball, Verdict::Finite, Verdict::Finite) => BoundaryClass::B2,
        (Omega::Ball, Verdict::Finite, Verdict::Infinite) => BoundaryClass::B3,
        // The weighted integrand dominates the unweighted one on [1, ∞).
        (Omega::Ball, Verdict::Infinite, Verdict::Finite) => BoundaryClass::Undecided,
        (Omega::WholeSpace, Verdict::Infinite, _) => BoundaryClass::Global,
        (Omega::WholeSpace, Verdict::Finite, _) => BoundaryClass::NoSolution,
    }
}

pub fn predict(spec: &ProblemSpec, omega: Omega) -> Classification {
    let mut details = Details::default();
    if !spec.admits_solutions() {
        details.note = Some(format!(
            "alpha = {} >= p - 1 = {}: no positive radial solutions",
            spec.alpha(),
            spec.p() - 1.0
        ));
        return Classification {
            class: BoundaryClass::NoSolution,
            omega,
            basis: Basis::Theorem,
            details,
        };
    }
    let verdicts = criterion(spec, CriterionKind::Unweighted).and_then(|u| Ok((u, criterion(spec, CriterionKind::Weighted)?)));
    let class = match verdicts {
        Ok((u, w)) => {
            details.unweighted = Some(u);
            details.weighted = Some(w);
            let class = class_from_verdicts(omega, u.verdict, w.verdict);
            if class == BoundaryClass::Undecided {
                details.note = Some("unweighted criterion infinite but weighted finite".into());
            }
            class
        }
        Err(e) => {
            details.note = Some(e.to_string());
            BoundaryClass::Undecided
        }
    };
    Classification {
        class,
        omega,
        basis: Basis::Theorem,
        details,
    }
}

/// Class suggested by a computed trajectory.
pub fn numeric_classify(sol: &RadialSolution, omega: Omega) -> Classification {
    let mut details = Details {
        termination: Some(sol.terminated),
        r0: sol.r0,
        w_tail_exponent: sol.blowup.as_ref().map(|b| b.w_tail_exponent),
        note: sol.note.clone(),
        ..Details::default()
    };
    let class = match (sol.terminated, omega) {
        (Termination::ReachedTarget, Omega::Ball) => BoundaryClass::B1,
        (Termination::ReachedTarget, Omega::WholeSpace) => BoundaryClass::Global,
        (Termination::BlowUp, Omega::WholeSpace) => BoundaryClass::NoSolution,
        (Termination::BlowUp, Omega::Ball) => match &sol.blowup {
            Some(b) if b.u_unbounded(sol.threshold) => BoundaryClass::B3,
            Some(_) => BoundaryClass::B2,
            None => BoundaryClass::Undecided,
        },
        (Termination::StepUnderflow, _) => {
            if details.note.is_none() {
                details.note = Some("step underflow without detected blow-up".into());
            }
            BoundaryClass::Undecided
        }
    };
    Classification {
        class,
        omega,
        basis: Basis::Numeric,
        details,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub predicted: BoundaryClass,
    pub numeric: BoundaryClass,
    pub unweighted: Option<ConvergenceVerdict>,
    pub weighted: Option<ConvergenceVerdict>,
    pub termination: Option<Termination>,
    pub r0: Option<f64>,
    pub w_tail_exponent: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub agree: bool,
    pub predicted: BoundaryClass,
    pub numeric: BoundaryClass,
    pub discrepancy: Option<Discrepancy>,
}

pub fn reconcile(predicted: &Classification, numeric: &Classification) -> AgreementReport {
    use BoundaryClass::*;
    let reached = numeric.details.termination == Some(Termination::ReachedTarget);
    let agree = match (predicted.class, numeric.class) {
        (Undecided, _) | (_, Undecided) => false,
        (a, b) if a == b => true,
        // A run that stays finite up to the horizon is the available evidence of globality.
        (Global, B1) | (B1, Global) => reached,
        _ => false,
    };
    let discrepancy = (!agree).then(|| Discrepancy {
        predicted: predicted.class,
        numeric: numeric.class,
        unweighted: predicted.details.unweighted,
        weighted: predicted.details.weighted,
        termination: numeric.details.termination,
        r0: numeric.details.r0,
        w_tail_exponent: numeric.details.w_tail_exponent,
        note: numeric.details.note.clone().or_else(|| predicted.details.note.clone()),
    });
    AgreementReport {
        agree,
        predicted: predicted.class,
        numeric: numeric.class,
        discrepancy,
    }
}
