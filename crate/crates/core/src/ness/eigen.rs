use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};
use num_complex::Complex64;

use super::{CovarianceMatrix, SolverError};

/// Largest tolerated `‖S‖_F ‖S⁻¹‖_F` for the eigenvector matrix of `W`.
const MAX_EIGENBASIS_CONDITION: f64 = 1e12;
/// `w_k + w̄_l` below this, relative to `‖W‖_∞`, is treated as zero.
const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// Solves `W C + C W† = diag(f)` with `W = S Λ S⁻¹`:
/// `C = S X S†`, `X_kl = (S⁻¹ F S⁻†)_kl / (w_k + w̄_l)`.
pub fn lyapunov_eigen_solve(w: MatRef<'_, Complex64>, f: &[f64]) -> Result<CovarianceMatrix, SolverError> {
    let n = w.nrows();
    assert_eq!(n, w.ncols());
    assert_eq!(n, f.len());

    let eig = w
        .eigen()
        .map_err(|e| SolverError::NumericalBreakdown(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.U().to_owned();
    let lambda: Vec<Complex64> = eig.S().column_vector().iter().copied().collect();
    if lambda.iter().any(|z| !z.is_finite()) {
        return Err(SolverError::NumericalBreakdown("non-finite eigenvalue".into()));
    }
    let s_inv = s.partial_piv_lu().inverse();
    let cond = s.norm_l2() * s_inv.norm_l2();
    if !(cond <= MAX_EIGENBASIS_CONDITION) {
        return Err(SolverError::NumericalBreakdown(format!(
            "eigenvector matrix condition {cond:.3e}"
        )));
    }

    let w_norm = (0..n)
        .map(|i| (0..n).map(|j| w[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let min_denominator = lambda
        .iter()
        .map(|z| 2.0 * z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if min_denominator < SINGULAR_DENOMINATOR * w_norm {
        return Err(SolverError::SingularSystem(format!(
            "spectrum of W reaches the imaginary axis: min 2 Re w = {min_denominator:.3e}"
        )));
    }

    let sources: Vec<(usize, f64)> = f.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
    let x = Mat::from_fn(n, n, |k, l| {
        let num: Complex64 = sources
            .iter()
            .map(|&(b, fb)| fb * s_inv[(k, b)] * s_inv[(l, b)].conj())
            .sum();
        num / (lambda[k] + lambda[l].conj())
    });
    let c = &s * &x * s.adjoint();
    if c.col_iter().any(|col| col.iter().any(|z| !z.is_finite())) {
        return Err(SolverError::NumericalBreakdown(
            "non-finite covariance entry".into(),
        ));
    }
    Ok(CovarianceMatrix::new(c))
}
