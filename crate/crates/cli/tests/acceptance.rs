mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use plap::{cmd_solve, cmd_sweep, parse_config, solve_problem, RunConfig};
use plap_core::criteria::{big_h_form_verdict, criterion, h_form_verdict, phi, sandwich_check};
use plap_core::expr::Term;
use plap_core::solver::{blowup_envelope_check, check_scaling_identity, picard_bootstrap, BootstrapOptions};
use plap_core::verify::{run_all, CONVEXITY_SLACK, ESTIMATE_SLACK};
use plap_core::{march, predict, BoundaryClass, CriterionKind, FuncExpr, Omega, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID_MAX_SECONDS: f64 = 1.0;
const SANDWICH_TOL: f64 = 1e-9;
const SOLVE_MAX: Duration = Duration::from_secs(10);
const SOLVER_REL_TOL: f64 = 1e-8;
const SERIES_TOL: f64 = 1e-6;
const SCALING_TOL: f64 = 1e-6;
const VALUE_REL_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-6;

fn report(n: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "criterion {n} {status}: {detail}").unwrap();
    assert!(pass, "criterion {n}: {detail}");
}

/// `(p, α, g₁, g₂, h, class)` for the three reference problems and three more per class.
const RECONCILE_SPECS: [(f64, f64, &str, &str, &str, BoundaryClass); 12] = [
    (2.0, 0.0, "t", "1", "t", BoundaryClass::B1),
    (2.0, 0.0, "t", "1", "t^6", BoundaryClass::B2),
    (2.0, 0.0, "t", "1", "t^4", BoundaryClass::B3),
    (3.0, 0.0, "t", "1", "t^4", BoundaryClass::B1),
    (3.0, 1.0, "t", "1", "t^2", BoundaryClass::B1),
    (3.0, 0.0, "t^2", "t", "t", BoundaryClass::B1),
    (1.5, 0.0, "t", "1", "t^3", BoundaryClass::B2),
    (3.0, 0.0, "t^2", "t", "t^6", BoundaryClass::B2),
    (1.5, 0.25, "t^2", "t^2", "t^8", BoundaryClass::B2),
    (1.5, 0.0, "t", "1", "t^2", BoundaryClass::B3),
    (3.0, 1.0, "t", "1", "t^3", BoundaryClass::B3),
    (1.5, 0.25, "t^2", "t", "t", BoundaryClass::B3),
];

fn reconcile_configs() -> Vec<(RunConfig, BoundaryClass)> {
    RECONCILE_SPECS
        .iter()
        .map(|&(p, alpha, g1, g2, h, class)| {
            let mut cfg = config(p, alpha, g1, g2, h);
            cfg.solver.rel_tol = SOLVER_REL_TOL;
            (cfg, class)
        })
        .collect()
}

fn label(cfg: &RunConfig) -> String {
    let pr = &cfg.problem;
    format!("(p={}, α={}, g1={}, g2={}, h={})", pr.p, pr.alpha, pr.g1, pr.g2, pr.h)
}

const GRID_SWEEP: &str = "[sweep]\np = [1.5, 2, 3]\nalpha_frac = [0, 0.5]\nm = [1, 2]\nbeta = [0, 1, 2]\nq = [1, 2, 3, 4, 5, 6, 7, 8]\n";

#[test]
fn criterion_01_power_family_grid() {
    let start = Instant::now();
    let (mut checked, mut mismatches) = (0, Vec::new());
    for p in [1.5, 2.0, 3.0] {
        for alpha in [0.0, (p - 1.0) / 2.0] {
            for m in [1u32, 2] {
                for beta in 0..=m {
                    for q in 1u32..=8 {
                        let g1 = format!("t^{m}");
                        let g2 = format!("t^{beta}");
                        let h = format!("t^{q}");
                        let spec = plap_core::ProblemSpec::from_strs(p, alpha, 3, ["1", "1", &g1, &g2, &h]).unwrap();
                        let class = predict(&spec, Omega::Ball).class;
                        let (m, beta, q) = (m as f64, beta as f64, q as f64);
                        let b1 = q * m <= (p - 1.0 - alpha) * (p - 1.0 - beta);
                        let theta = 1.0 / (p - 1.0 - alpha);
                        let nu = m * p / (m * p + p - 1.0 - beta);
                        let kappa = theta * q / p + 1.0;
                        let b2 = theta - nu * kappa < -1.0 - 1e-12;
                        let expected = if b1 {
                            BoundaryClass::B1
                        } else if b2 {
                            BoundaryClass::B2
                        } else {
                            BoundaryClass::B3
                        };
                        checked += 1;
                        if class != expected {
                            mismatches.push(format!("{p},{alpha},{m},{beta},{q}: {class:?} vs {expected:?}"));
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        mismatches.is_empty() && secs < GRID_MAX_SECONDS,
        &format!("{checked} specs, {} mismatches {mismatches:?}, {secs:.3} s", mismatches.len()),
    );
}

fn random_power_sum(rng: &mut ChaCha8Rng) -> FuncExpr {
    let k = rng.random_range(1..=3);
    let mut terms: Vec<Term> = (0..k)
        .map(|_| Term {
            coeff: rng.random_range(0.1..10.0),
            exponent: rng.random_range(0.0..6.0),
        })
        .collect();
    terms.push(Term {
        coeff: rng.random_range(0.1..10.0),
        exponent: rng.random_range(0.5..6.0),
    });
    FuncExpr::from_terms(terms).unwrap()
}

#[test]
fn criterion_02_integral_forms_and_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut disagreements = 0;
    for _ in 0..200 {
        let h = random_power_sum(&mut rng);
        let theta = rng.random_range(0.2..5.0);
        let p = rng.random_range(1.1..5.0);
        for k in 1..=50 {
            let nu = k as f64 / 10.0;
            if h_form_verdict(&h, theta, p, nu) != big_h_form_verdict(&h, theta, p, nu) {
                disagreements += 1;
            }
        }
    }
    let (mut violations, mut worst) = (0, f64::NEG_INFINITY);
    for _ in 0..500 {
        let h = random_power_sum(&mut rng);
        let p = rng.random_range(1.1..5.0);
        let s = 10f64.powf(rng.random_range(-3.0..3.0));
        let v = sandwich_check(&h, p, s).unwrap().max_relative_violation();
        worst = worst.max(v);
        if !(v <= SANDWICH_TOL) {
            violations += 1;
        }
    }
    report(
        2,
        disagreements == 0 && violations == 0,
        &format!("10000 verdict pairs, {disagreements} disagree; 500 sandwiches, {violations} violations, worst {worst:.2e}"),
    );
}

#[test]
fn criterion_03_solver_matches_prediction() {
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    for (cfg, class) in reconcile_configs() {
        let start = Instant::now();
        let outcome = solve_problem(&cfg.problem, &cfg.solver, cfg.seed).unwrap();
        let took = start.elapsed();
        let r = &outcome.report;
        let blowup = r.termination == Some(plap_core::Termination::BlowUp);
        if blowup {
            slowest = slowest.max(took);
        }
        let agree = r.reconcile.as_ref().is_some_and(|a| a.agree);
        if r.predicted_class != class || r.numeric_class != Some(class) || !agree || (blowup && took > SOLVE_MAX) {
            failures.push(format!("{} {:?}/{:?} in {took:?}", label(&cfg), r.predicted_class, r.numeric_class));
        }
    }
    report(3, failures.is_empty(), &format!("12 specs, failures {failures:?}, slowest blow-up {slowest:?}"));
}

#[test]
fn criterion_04_trajectory_inequalities() {
    let mut failures = Vec::new();
    let mut checks = 0;
    for (cfg, _) in reconcile_configs() {
        let spec = cfg.problem.spec().unwrap();
        let sol = march(&spec, cfg.solver.u0, cfg.solver.v0, &cfg.solver.options()).unwrap();
        for rep in run_all(&sol) {
            checks += 1;
            let slack_ok = match rep.name.as_str() {
                "convexity_bounds" => rep.slack <= CONVEXITY_SLACK,
                "uprime_estimate" => rep.slack <= ESTIMATE_SLACK,
                _ => true,
            };
            if !rep.pass || !slack_ok {
                failures.push(format!("{} {}: {:.2e}", label(&cfg), rep.name, rep.max_relative_violation));
            }
        }
    }
    let slacks_pinned = CONVEXITY_SLACK == 1e-4 && ESTIMATE_SLACK == 1e-6;
    report(4, failures.is_empty() && slacks_pinned, &format!("{checks} checks, failures {failures:?}"));
}

#[test]
fn criterion_05_bootstrap_series() {
    let spec = reference("t").problem.spec().unwrap();
    let seg = picard_bootstrap(&spec, 1.0, 1.0, 0.1, BootstrapOptions::default()).unwrap();
    let r = *seg.r.last().unwrap();
    let du = (seg.u.last().unwrap() - (1.0 + r * r / 6.0)).abs();
    let dv = (seg.v.last().unwrap() - (1.0 + r.powi(3) / 36.0)).abs();
    report(
        5,
        (r - 0.1).abs() < 1e-15 && du < SERIES_TOL && dv < SERIES_TOL,
        &format!("at r = {r}: |Δu| = {du:.2e}, |Δv| = {dv:.2e}"),
    );
}

#[test]
fn criterion_06_scaling_identity() {
    let cases = [("t", 0.5, 2.0), ("t", 2.0, 0.5), ("t^6", 0.5, 6.0), ("t^6", 2.0, 1.5)];
    let mut worst = 0.0_f64;
    let mut all = true;
    for (h, lambda, radius) in cases {
        let spec = reference(h).problem.spec().unwrap();
        let rep = check_scaling_identity(&spec, lambda, 1.0, 1.0, radius, &SolverOptions::default()).unwrap();
        worst = worst.max(rep.residual());
        all &= rep.pass && rep.residual() < SCALING_TOL;
    }
    report(6, all, &format!("4 cases, worst residual {worst:.2e}"));
}

#[test]
fn criterion_07_closed_form_value() {
    let spec = reference("t^6").problem.spec().unwrap();
    let exact = 3.0 * 4f64.powf(2.0 / 3.0) / 5.0;
    let value = criterion(&spec, CriterionKind::Unweighted).unwrap().value.unwrap();
    let at_one = phi(&spec, 1.0).unwrap();
    let e1 = (value - exact).abs() / exact;
    let e2 = (at_one - exact).abs() / exact;
    report(
        7,
        e1 < VALUE_REL_TOL && e2 < VALUE_REL_TOL,
        &format!("value {value}, Φ(1) {at_one}, exact {exact}, rel errors {e1:.2e} / {e2:.2e}"),
    );
}

#[test]
fn criterion_08_blow_up_envelope() {
    let mut details = Vec::new();
    let mut all = true;
    for h in ["t^6", "t^4"] {
        let spec = reference(h).problem.spec().unwrap();
        let sol = march(&spec, 1.0, 1.0, &SolverOptions::default()).unwrap();
        let env = blowup_envelope_check(&sol).unwrap();
        let decade = env.window.1 / env.window.0 >= 10.0;
        all &= env.pass && env.c1 > 0.0 && env.c1 < env.c2 && env.violations == 0 && decade;
        details.push(format!(
            "h={h}: C1 {:.4e}, C2 {:.4e}, {} points, {} violations, window {:.1e}..{:.1e}",
            env.c1, env.c2, env.points_checked, env.violations, env.window.0, env.window.1
        ));
    }
    report(8, all, &details.join("; "));
}

#[test]
fn criterion_09_equation_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for (k, (cfg, _)) in reconcile_configs().into_iter().enumerate() {
        let out_dir = dir.path().join(k.to_string());
        cmd_solve(&cfg, &out_dir).unwrap();
        let rows = csv_rows(&std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap());
        let r_end: f64 = rows.last().unwrap()["r"].parse().unwrap();
        let mut sup = 0.0_f64;
        for row in &rows {
            let r: f64 = row["r"].parse().unwrap();
            if !(0.01..=0.9 * r_end).contains(&r) {
                continue;
            }
            for col in ["res_eq1", "res_eq2"] {
                let x: f64 = row[col].parse().unwrap();
                sup = if x.is_nan() { f64::INFINITY } else { sup.max(x.abs()) };
            }
        }
        worst = worst.max(sup);
        if !(sup < RESIDUAL_TOL) {
            failures.push(format!("{}: {sup:.2e}", label(&cfg)));
        }
    }
    report(9, failures.is_empty(), &format!("12 specs, worst sup {worst:.2e}, failures {failures:?}"));
}

#[test]
fn criterion_10_sweep_is_deterministic() {
    let cfg = parse_config(&config_text(2.0, 0.0, "t", "1", "t", GRID_SWEEP)).unwrap();
    let run = || {
        let mut buf = Vec::new();
        cmd_sweep(&cfg, true, None, &mut buf).unwrap();
        buf
    };
    let (a, b) = (run(), run());
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 1;
    report(10, a == b, &format!("{rows} rows, {} bytes, identical {}", a.len(), a == b));
}
