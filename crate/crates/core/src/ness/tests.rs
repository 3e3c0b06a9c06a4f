use super::*;
use crate::model::{ChainSpec, DriveSpec, PotentialKind};
use approx::assert_relative_eq;

fn opts(method: SolverMethod) -> SolverOptions {
    SolverOptions {
        method,
        ..SolverOptions::default()
    }
}

#[test]
fn two_site_clean_current() {
    // L = 2, γ = 1, f = (1, 0): J = γ/(γ² + 1... ) evaluates to 0.4
    let spec = ChainSpec::clean(2).unwrap();
    let drive = DriveSpec::standard(0.0).unwrap();
    let sol = solve_ness(&spec, &drive, &SolverOptions::default()).unwrap();
    assert_relative_eq!(sol.current, 0.4, epsilon = 1e-14);
    assert_relative_eq!(sol.boundary_in, 0.4, epsilon = 1e-14);
    assert_relative_eq!(sol.boundary_out, -0.4, epsilon = 1e-14);
    assert_eq!(sol.route, SolveRoute::LyapunovEigen);
}

#[test]
fn clean_chain_current_is_size_independent() {
    let drive = DriveSpec::standard(0.0).unwrap();
    let j: Vec<f64> = [4, 9, 30]
        .iter()
        .map(|&l| {
            solve_ness(&ChainSpec::clean(l).unwrap(), &drive, &SolverOptions::default())
                .unwrap()
                .current
        })
        .collect();
    assert_relative_eq!(j[0], j[1], epsilon = 1e-12);
    assert_relative_eq!(j[0], j[2], epsilon = 1e-12);
}

#[test]
fn routes_agree_without_dephasing() {
    let spec = ChainSpec::new(21, 0.8, PotentialKind::aah(0.3)).unwrap();
    let drive = DriveSpec::standard(0.0).unwrap();
    let a = solve_ness(&spec, &drive, &opts(SolverMethod::LyapunovEigen)).unwrap();
    let b = solve_ness(&spec, &drive, &opts(SolverMethod::SparseVectorized)).unwrap();
    assert!(a.covariance.max_abs_diff(&b.covariance) < 1e-11);
    assert_eq!(b.route, SolveRoute::SparseVectorized);
}

#[test]
fn dephasing_selects_sparse_route() {
    let spec = ChainSpec::new(13, 1.0, PotentialKind::Fibonacci).unwrap();
    let drive = DriveSpec::standard(0.3).unwrap();
    let sol = solve_ness(&spec, &drive, &SolverOptions::default()).unwrap();
    assert_eq!(sol.route, SolveRoute::SparseVectorized);
    assert!(sol.relative_inhomogeneity() < 1e-8);
    assert!(matches!(
        solve_ness(&spec, &drive, &opts(SolverMethod::LyapunovEigen)),
        Err(SolverError::InvalidOptions(_))
    ));
}

#[test]
fn invalid_tolerance_rejected() {
    let spec = ChainSpec::clean(4).unwrap();
    let drive = DriveSpec::standard(0.0).unwrap();
    let bad = SolverOptions {
        residual_tolerance: -1.0,
        ..SolverOptions::default()
    };
    assert!(matches!(
        solve_ness(&spec, &drive, &bad),
        Err(SolverError::InvalidOptions(_))
    ));
}

#[test]
fn zero_bias_gives_zero_current() {
    let spec = ChainSpec::new(8, 1.0, PotentialKind::aah(0.0)).unwrap();
    let drive = DriveSpec::new(1.0, 0.5, 0.5, 0.0).unwrap();
    let sol = solve_ness(&spec, &drive, &SolverOptions::default()).unwrap();
    assert!(sol.current.abs() < 1e-12);
    for n in sol.density {
        assert_relative_eq!(n, 0.5, epsilon = 1e-12);
    }
}

#[test]
fn double_precision_breaks_down_deep_in_localized_phase() {
    let spec = ChainSpec::new(89, 1.5, PotentialKind::aah(0.0)).unwrap();
    let drive = DriveSpec::standard(0.0).unwrap();
    let dbl = SolverOptions {
        precision: Precision::Double,
        ..SolverOptions::default()
    };
    assert!(solve_ness(&spec, &drive, &dbl).is_err());
    let sol = solve_ness(&spec, &drive, &SolverOptions::default()).unwrap();
    assert!(matches!(sol.route, SolveRoute::LyapunovExtended { .. }));
    assert!(sol.current > 0.0 && sol.current < 1e-12);
    assert!(sol.relative_inhomogeneity() < 1e-8);
}

#[test]
fn hermitize_and_spectrum() {
    let mut c = CovarianceMatrix::new(faer::Mat::from_fn(2, 2, |i, j| {
        Complex64::new((i + j) as f64, i as f64 - j as f64 + 0.1)
    }));
    assert!(c.hermiticity_error() > 0.0);
    c.hermitize();
    assert_eq!(c.hermiticity_error(), 0.0);
    let ev = c.occupation_spectrum().unwrap();
    assert!(ev[0] <= ev[1]);
}
