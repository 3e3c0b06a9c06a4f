use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;

use super::{CovarianceMatrix, SolverError};
use crate::model::{Drift, Injection};

/// Applies `C ↦ W C + C W† + Γ Δ(C)` to column-major `vec(C)`.
fn apply(w: &Drift, dephasing: f64, x: &[Complex64], out: &mut [Complex64]) {
    let n = w.len();
    let d = w.diagonal();
    let hop = Drift::OFF_DIAGONAL;
    for j in 0..n {
        for i in 0..n {
            let at = |a: usize, b: usize| x[a + b * n];
            let mut r = (d[i] + d[j].conj()) * at(i, j);
            if i != j {
                r += dephasing * at(i, j);
            }
            if i > 0 {
                r += hop * at(i - 1, j);
            }
            if i + 1 < n {
                r += hop * at(i + 1, j);
            }
            if j > 0 {
                r += hop.conj() * at(i, j - 1);
            }
            if j + 1 < n {
                r += hop.conj() * at(i, j + 1);
            }
            out[i + j * n] = r;
        }
    }
}

/// Sparse LU on the `L² × L²` vectorized equation. `W` is tridiagonal, so
/// each row holds at most five entries. Valid for every `Γ ≥ 0`.
pub fn sparse_vectorized_solve(
    w: &Drift,
    f: &Injection,
    dephasing: f64,
) -> Result<CovarianceMatrix, SolverError> {
    let n = w.len();
    let dim = n * n;
    let d = w.diagonal();
    let hop = Drift::OFF_DIAGONAL;

    let mut entries = Vec::with_capacity(5 * dim);
    for j in 0..n {
        for i in 0..n {
            let p = i + j * n;
            let mut diag = d[i] + d[j].conj();
            if i != j {
                diag += dephasing;
            }
            entries.push(Triplet::new(p, p, diag));
            if i > 0 {
                entries.push(Triplet::new(p, p - 1, hop));
            }
            if i + 1 < n {
                entries.push(Triplet::new(p, p + 1, hop));
            }
            if j > 0 {
                entries.push(Triplet::new(p, p - n, hop.conj()));
            }
            if j + 1 < n {
                entries.push(Triplet::new(p, p + n, hop.conj()));
            }
        }
    }
    let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(dim, dim, &entries)
        .map_err(|e| SolverError::NumericalBreakdown(format!("sparse assembly failed: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| SolverError::SingularSystem(format!("sparse LU failed: {e:?}")))?;

    let mut rhs = Mat::<Complex64>::zeros(dim, 1);
    for (i, v) in f.nonzero() {
        rhs[(i + i * n, 0)] = Complex64::new(v, 0.0);
    }
    let mut x = lu.solve(&rhs);

    // one step of iterative refinement
    let xs: Vec<Complex64> = x.col(0).iter().copied().collect();
    let mut ax = vec![Complex64::new(0.0, 0.0); dim];
    apply(w, dephasing, &xs, &mut ax);
    let r = Mat::from_fn(dim, 1, |p, _| rhs[(p, 0)] - ax[p]);
    let dx = lu.solve(&r);
    x += &dx;

    if x.col(0).iter().any(|z| !z.is_finite()) {
        return Err(SolverError::SingularSystem(
            "sparse solve produced non-finite values".into(),
        ));
    }
    Ok(CovarianceMatrix::new(Mat::from_fn(n, n, |i, j| {
        x[(i + j * n, 0)]
    })))
}
