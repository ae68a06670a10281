use approx::assert_relative_eq;
use plap_core::solver::{
    blowup_envelope_check, check_scaling_identity, picard_bootstrap, BootstrapOptions, SolverError,
};
use plap_core::verify::{equation_residuals, run_all};
use plap_core::{march, numeric_classify, predict, reconcile, BoundaryClass, Omega, ProblemSpec, SolverOptions, Termination};
use proptest::prelude::*;

fn family(h: &str) -> ProblemSpec {
    ProblemSpec::from_strs(2.0, 0.0, 3, ["1", "1", "t", "1", h]).unwrap()
}

#[test]
fn bootstrap_reproduces_series() {
    let seg = picard_bootstrap(&family("t"), 1.0, 1.0, 0.1, BootstrapOptions::default()).unwrap();
    let r = *seg.r.last().unwrap();
    assert_relative_eq!(r, 0.1);
    // u'' + (2/r)u' = v ≈ 1 and v'' + (2/r)v' = u' ≈ r/3
    assert!((seg.u.last().unwrap() - (1.0 + r * r / 6.0)).abs() < 1e-6);
    assert!((seg.v.last().unwrap() - (1.0 + r.powi(3) / 36.0)).abs() < 1e-6);
}

#[test]
fn classes_of_the_three_reference_problems() {
    for (h, class) in [("t", BoundaryClass::B1), ("t^6", BoundaryClass::B2), ("t^4", BoundaryClass::B3)] {
        let spec = family(h);
        let sol = march(&spec, 1.0, 1.0, &SolverOptions::default()).unwrap();
        let numeric = numeric_classify(&sol, Omega::Ball);
        assert_eq!(numeric.class, class, "h = {h}");
        assert!(reconcile(&predict(&spec, Omega::Ball), &numeric).agree);
        for rep in run_all(&sol) {
            assert!(rep.pass, "h = {h}: {rep:?}");
        }
    }
}

#[test]
fn class_does_not_depend_on_initial_values() {
    for h in ["t", "t^6", "t^4"] {
        let spec = family(h);
        let expected = predict(&spec, Omega::Ball).class;
        for (u0, v0) in [(1.0, 1.0), (0.1, 5.0), (5.0, 0.1)] {
            let sol = march(&spec, u0, v0, &SolverOptions::default()).unwrap();
            assert_eq!(numeric_classify(&sol, Omega::Ball).class, expected, "h = {h}, ({u0}, {v0})");
        }
    }
}

#[test]
fn larger_initial_values_blow_up_sooner() {
    let spec = family("t^6");
    let r0 = |v0: f64| march(&spec, 1.0, v0, &SolverOptions::default()).unwrap().r0.unwrap();
    assert!(r0(5.0) < r0(1.0) && r0(1.0) < r0(0.1));
}

#[test]
fn halving_the_tolerance_changes_results_by_the_tolerance() {
    for h in ["t", "t^6", "t^4"] {
        let spec = family(h);
        let opts = SolverOptions::default();
        let a = march(&spec, 1.0, 1.0, &opts).unwrap();
        let b = march(&spec, 1.0, 1.0, &opts.with_rel_tol(opts.rel_tol / 2.0)).unwrap();
        assert_eq!(a.terminated, b.terminated);
        match a.terminated {
            Termination::BlowUp => assert_relative_eq!(a.r0.unwrap(), b.r0.unwrap(), max_relative = 1e-7),
            _ => {
                let x = 0.5 * a.r_end();
                let (ua, va) = a.interpolate(x).unwrap();
                let (ub, vb) = b.interpolate(x).unwrap();
                assert_relative_eq!(ua, ub, max_relative = 1e-7);
                assert_relative_eq!(va, vb, max_relative = 1e-7);
            }
        }
    }
}

#[test]
fn scaling_identity_holds_before_blow_up() {
    let cases = [("t", 2.0, 0.5), ("t", 0.5, 2.0), ("t", 3.0, 1.0), ("t^6", 2.0, 1.5), ("t^6", 0.5, 6.0), ("t^6", 3.0, 1.0)];
    for (h, lambda, radius) in cases {
        let rep = check_scaling_identity(&family(h), lambda, 1.0, 1.0, radius, &SolverOptions::default()).unwrap();
        assert!(rep.pass && rep.residual() < 1e-6, "h = {h}, λ = {lambda}: {rep:?}");
    }
}

#[test]
fn scaling_applies_to_the_gradient_weighted_problem() {
    let spec = ProblemSpec::from_strs(3.0, 1.0, 3, ["1 + t", "1", "t", "1", "t^2"]).unwrap();
    let rep = check_scaling_identity(&spec, 3.0, 1.0, 1.0, 0.5, &SolverOptions::default()).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn envelope_holds_for_blow_up_runs() {
    for h in ["t^6", "t^4"] {
        let sol = march(&family(h), 1.0, 1.0, &SolverOptions::default()).unwrap();
        let env = blowup_envelope_check(&sol).unwrap();
        assert!(env.pass && env.c1 > 0.0 && env.c1 < env.c2, "h = {h}: {env:?}");
        assert_eq!(env.violations, 0, "h = {h}: {env:?}");
    }
}

#[test]
fn envelope_is_rejected_without_blow_up() {
    let sol = march(&family("t"), 1.0, 1.0, &SolverOptions::new(5.0)).unwrap();
    assert!(matches!(blowup_envelope_check(&sol), Err(SolverError::NotBlowUp)));
}

#[test]
fn residuals_are_small_on_reference_problems() {
    for h in ["t", "t^6", "t^4"] {
        let sol = march(&family(h), 1.0, 1.0, &SolverOptions::default()).unwrap();
        let (r1, r2) = equation_residuals(&sol);
        let end = 0.9 * sol.r_end();
        let worst = (0..sol.len())
            .filter(|&i| sol.r[i] >= 0.01 && sol.r[i] <= end)
            .map(|i| r1[i].abs().max(r2[i].abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "h = {h}: {worst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_power_problems_reconcile_and_verify(
        pi in 0usize..3, half in any::<bool>(), m in 1u32..=2, bf in 0u32..=2, q in 1u32..=8,
    ) {
        let p = [1.5, 2.0, 3.0][pi];
        let alpha = if half { (p - 1.0) / 2.0 } else { 0.0 };
        let beta = bf.min(m);
        let g1 = format!("t^{m}");
        let g2 = format!("t^{beta}");
        let h = format!("t^{q}");
        let spec = ProblemSpec::from_strs(p, alpha, 3, ["1", "1", &g1, &g2, &h]).unwrap();
        let sol = march(&spec, 1.0, 1.0, &SolverOptions::default()).unwrap();
        let report = reconcile(&predict(&spec, Omega::Ball), &numeric_classify(&sol, Omega::Ball));
        prop_assert!(report.agree, "{:?}", report);
        for rep in run_all(&sol) {
            prop_assert!(rep.pass, "{:?}", rep);
        }
    }
}
