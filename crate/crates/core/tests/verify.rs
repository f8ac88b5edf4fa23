use langevin_core::harness::{verify_all, VerifyGrid};
use langevin_core::integrators::underdamped_mean;
use langevin_core::verify::{check_fact1, check_fact2, check_step_formulas, fine_drift};
use langevin_core::{LocallyNonconvexPotential, PhaseState, Potential, StepCoefficients};

#[test]
fn fact2_example_has_no_violations() {
    let r = check_fact2(1.0, 2.0, 2.0, 0.05, 1000, 9).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.max_ratio < 1.0);
}

#[test]
fn fact1_log_normalizer_matches_direct_integral() {
    let a = 0.5 * 1.5f64.exp() * 0.09;
    let p = LocallyNonconvexPotential::new(1, 1.0, 0.5, a, 0.3).unwrap();
    let r = check_fact1(&p, 400).unwrap();
    assert!(r.satisfied);
    // Trapezoid on a wide window converges geometrically for smooth integrands.
    let (lo, hi, n) = (-40.0, 40.0, 80_000);
    let dx = (hi - lo) / n as f64;
    let z: f64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (-p.value(&[lo + i as f64 * dx]).unwrap()).exp()
        })
        .sum::<f64>()
        * dx;
    assert!((r.log_z - z.ln()).abs() < 1e-6, "{} vs {}", r.log_z, z.ln());

    let p2 = LocallyNonconvexPotential::new(2, 1.0, 0.5, a, 0.3).unwrap();
    assert!(check_fact1(&p2, 400).unwrap().satisfied);
}

#[test]
fn step_formulas_against_fine_oracles() {
    let r = check_step_formulas(2.0, 1.0, 0.25, 10, 100_000, 1000, 4).unwrap();
    assert!(r.satisfied, "{r:?}");
    assert!(r.max_cov_z < 4.0);
}

#[test]
fn fine_drift_converges_at_first_order() {
    let (gamma, xi, h) = (2.0, 1.0, 0.25);
    let c = StepCoefficients::new(gamma, xi, h).unwrap();
    let x = PhaseState::new(vec![0.3], vec![-1.0]).unwrap();
    let g = [0.7];
    let exact = underdamped_mean(&x, &g, &c).unwrap();
    let err = |n| {
        let y = fine_drift(&x, &g, gamma, xi, h, n);
        (y.theta[0] - exact.theta[0]).abs() + (y.r[0] - exact.r[0]).abs()
    };
    let (e1, e2) = (err(400), err(800));
    assert!(((e1 / e2).log2() - 1.0).abs() < 0.05);
    // Richardson extrapolation removes the leading term.
    let y1 = fine_drift(&x, &g, gamma, xi, h, 400);
    let y2 = fine_drift(&x, &g, gamma, xi, h, 800);
    assert!((2.0 * y2.r[0] - y1.r[0] - exact.r[0]).abs() < 1e-6);
}

#[test]
fn default_grid_passes() {
    let t = verify_all(&VerifyGrid::default_grid()).unwrap();
    let failed: Vec<_> = t.failures().collect();
    assert!(failed.is_empty(), "{failed:?}");
}
