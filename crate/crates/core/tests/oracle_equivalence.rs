//! The covariance solvers against the exact many-body steady state.

use proptest::prelude::*;
use qpchain::oracle::{build_liouvillian, covariance_from_density, steady_state_dense};
use qpchain::{extract_currents, solve_ness, ChainSpec, DriveSpec, ModelKind, SolverOptions};

fn model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Clean),
        Just(ModelKind::Aah),
        Just(ModelKind::Fibonacci)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn solver_matches_oracle(
        length in 2usize..=5,
        kind in model(),
        lambda in 0.0..2.0f64,
        theta in 0.0..std::f64::consts::TAU,
        gamma in 0.5..2.0f64,
        f1 in 0.0..1.0f64,
        f_l in 0.0..1.0f64,
        dephasing in prop_oneof![Just(0.0), Just(0.1), Just(1.0)],
    ) {
        let spec = ChainSpec::new(length, lambda, kind.with_phase(theta)).unwrap();
        let drive = DriveSpec::new(gamma, f1, f_l, dephasing).unwrap();

        let gen = build_liouvillian(&spec, &drive).unwrap();
        let rho = steady_state_dense(&gen).unwrap();
        prop_assert!(gen.apply_residual(&rho) <= 1e-11);
        prop_assert!(rho.min_eigenvalue() >= -1e-10);
        let exact = covariance_from_density(&rho);
        let exact_j = extract_currents(&exact);
        prop_assert!(exact_j.deviation <= 1e-10, "oracle currents not homogeneous");

        let sol = solve_ness(&spec, &drive, &SolverOptions::default()).unwrap();
        prop_assert!(sol.covariance.max_abs_diff(&exact) <= 1e-8);
        prop_assert!((sol.current - exact_j.current).abs() <= 1e-8);
        for (a, b) in sol.site_currents.iter().zip(&exact_j.site_currents) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
        prop_assert!(sol.inhomogeneity <= 1e-8 * sol.current.abs() + 1e-12);
    }
}
