//! Existence and boundary-blow-up analysis for radial solutions of coupled
//! p-Laplace systems with gradient-dependent source terms.

pub mod classify;
pub mod criteria;
pub mod expr;
pub mod fd;
pub mod problem;
pub mod quad;
pub mod solver;
pub mod verify;

pub use classify::{numeric_classify, predict, reconcile, BoundaryClass, Classification, Omega};
pub use criteria::{ConvergenceVerdict, CriterionKind, Method, Verdict};
pub use expr::FuncExpr;
pub use problem::{Candidate, ProblemSpec, SpecError};
pub use solver::{march, RadialSolution, SolverOptions, Termination};
