//! Steady-state covariance matrix of the boundary-driven chain.
//!
//! The steady state solves `W C + C W† + Γ Δ(C) = F`, where `Δ` removes the
//! diagonal. Three routes are available:
//!
//! * [`lyapunov_eigen_solve`]: `Γ = 0`, diagonalise `W` in double precision.
//! * [`extended::lyapunov_extended_solve`]: `Γ = 0`, the same eigenbasis
//!   formula evaluated in multiprecision. Needed deep in the localized phase,
//!   where currents fall far below double-precision resolution.
//! * [`sparse_vectorized_solve`]: any `Γ`, sparse LU on `vec(C)`.
//!
//! Every accepted solution has its residual and current homogeneity checked.

mod currents;
mod eigen;
pub mod extended;
mod mp;
mod sparse;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{build_drift_and_injection, ChainSpec, Drift, DriveSpec, Injection};

pub use currents::{boundary_currents, extract_currents, SiteCurrents};
pub use eigen::lyapunov_eigen_solve;
pub use sparse::sparse_vectorized_solve;

/// Relative current homogeneity required of every accepted solve.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no unique steady state: {0}")]
    SingularSystem(String),
    #[error("steady-state residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// `C_ij = <c_j† c_i>`, stored 0-based.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix(Mat<Complex64>);

impl CovarianceMatrix {
    pub fn new(mat: Mat<Complex64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "covariance matrix must be square");
        CovarianceMatrix(mat)
    }

    pub fn zeros(n: usize) -> Self {
        CovarianceMatrix(Mat::zeros(n, n))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<Complex64> {
        &self.0
    }

    pub fn into_mat(self) -> Mat<Complex64> {
        self.0
    }

    /// `max |C - C†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.len();
        let mut err: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                err = err.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        err
    }

    /// Replace `C` by `(C + C†)/2`.
    pub fn hermitize(&mut self) {
        let n = self.len();
        for j in 0..n {
            for i in 0..j {
                let avg = 0.5 * (self.0[(i, j)] + self.0[(j, i)].conj());
                self.0[(i, j)] = avg;
                self.0[(j, i)] = avg.conj();
            }
            self.0[(j, j)].im = 0.0;
        }
    }

    /// Occupations `C_ii`.
    pub fn density(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.0[(i, i)].re).collect()
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn occupation_spectrum(&self) -> Result<Vec<f64>, SolverError> {
        let mut h = self.clone();
        h.hermitize();
        let mut ev =
            h.0.self_adjoint_eigenvalues(faer::Side::Lower)
                .map_err(|e| SolverError::NumericalBreakdown(format!("{e:?}")))?;
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// `max |C - other|` entrywise.
    pub fn max_abs_diff(&self, other: &CovarianceMatrix) -> f64 {
        assert_eq!(self.len(), other.len());
        let n = self.len();
        let mut d: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                d = d.max((self.0[(i, j)] - other.0[(i, j)]).norm());
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Eigendecomposition when `Γ = 0`, sparse vectorized otherwise.
    #[default]
    Auto,
    LyapunovEigen,
    SparseVectorized,
}

/// Arithmetic used on the `Γ = 0` eigendecomposition route.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    /// Double precision only; failures are returned.
    Double,
    /// Double precision, retried in multiprecision if the double-precision
    /// solution is rejected.
    #[default]
    Fallback,
    /// Multiprecision from the start.
    Extended,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Accepted `max |W C + C W† + Γ Δ(C) - F|`, relative to `max(γ, 1)`.
    pub residual_tolerance: f64,
    pub hermitize: bool,
    pub precision: Precision,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            residual_tolerance: 1e-9,
            hermitize: true,
            precision: Precision::Fallback,
        }
    }
}

/// Which route produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolveRoute {
    LyapunovEigen,
    /// Multiprecision eigenbasis route with the working precision in bits.
    LyapunovExtended {
        bits: u32,
    },
    SparseVectorized,
}

impl SolveRoute {
    pub fn name(&self) -> &'static str {
        match self {
            SolveRoute::LyapunovEigen => "lyapunov-eigen",
            SolveRoute::LyapunovExtended { .. } => "lyapunov-extended",
            SolveRoute::SparseVectorized => "sparse-vectorized",
        }
    }
}

#[derive(Clone, Debug)]
pub struct NessSolution {
    pub covariance: CovarianceMatrix,
    /// `J_i` on the `L - 1` bonds, positive for flow from site 1 towards L.
    pub site_currents: Vec<f64>,
    /// Mean of `site_currents`.
    pub current: f64,
    /// `γ (f1 - C_11)`: particles injected by the left bath.
    pub boundary_in: f64,
    /// `γ (fL - C_LL)`: equals `-current` in the steady state.
    pub boundary_out: f64,
    pub density: Vec<f64>,
    /// `max |W C + C W† + Γ Δ(C) - F|`, in the working precision.
    pub residual: f64,
    /// `max(|J_i - J|, |J_0 - J|, |J_L + J|)`.
    pub inhomogeneity: f64,
    pub route: SolveRoute,
}

impl NessSolution {
    /// `inhomogeneity / |J|`.
    pub fn relative_inhomogeneity(&self) -> f64 {
        if self.current == 0.0 {
            if self.inhomogeneity == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.inhomogeneity / self.current.abs()
        }
    }
}

pub fn solve_ness(
    spec: &ChainSpec,
    drive: &DriveSpec,
    opts: &SolverOptions,
) -> Result<NessSolution, SolverError> {
    if !(opts.residual_tolerance.is_finite() && opts.residual_tolerance > 0.0) {
        return Err(SolverError::InvalidOptions(format!(
            "residual tolerance must be positive, got {}",
            opts.residual_tolerance
        )));
    }
    let dephasing = drive.dephasing();
    let method = match opts.method {
        SolverMethod::Auto if dephasing == 0.0 => SolverMethod::LyapunovEigen,
        SolverMethod::Auto => SolverMethod::SparseVectorized,
        SolverMethod::LyapunovEigen if dephasing != 0.0 => {
            return Err(SolverError::InvalidOptions(
                "the eigendecomposition route requires zero dephasing".into(),
            ))
        }
        m => m,
    };
    // The equation is linear in F, and C = I solves it for F = γ(P₁ + P_L).
    // Hence C = f_L·I + (f₁ - f_L)·C₁, where C₁ carries unit bias. Solving for C₁
    // keeps the relative accuracy of the currents independent of the bias.
    let unit = DriveSpec::new(drive.gamma(), 1.0, 0.0, dephasing)
        .map_err(|e| SolverError::InvalidOptions(format!("drive rejected: {e}")))?;
    let (w, f1) = build_drift_and_injection(spec, &unit);

    let sol = match method {
        SolverMethod::LyapunovEigen => match opts.precision {
            Precision::Double => solve_double(&w, &f1, &unit, opts),
            Precision::Extended => extended::solve_validated(&w, &f1, &unit, opts),
            Precision::Fallback => solve_double(&w, &f1, &unit, opts)
                .or_else(|_| extended::solve_validated(&w, &f1, &unit, opts)),
        },
        SolverMethod::SparseVectorized => {
            let c = sparse_vectorized_solve(&w, &f1, dephasing)?;
            finish(c, &w, &f1, &unit, opts, SolveRoute::SparseVectorized)
        }
        SolverMethod::Auto => unreachable!(),
    }?;
    let (_, f) = build_drift_and_injection(spec, drive);
    Ok(compose(sol, drive, &w, &f))
}

/// Scales a unit-bias solution to the actual reservoir occupations.
fn compose(unit: NessSolution, drive: &DriveSpec, w: &Drift, f: &Injection) -> NessSolution {
    let bias = drive.bias();
    let fl = drive.f_l();
    let n = unit.covariance.len();
    let c1 = unit.covariance.as_mat();
    let c = CovarianceMatrix::new(Mat::from_fn(n, n, |i, j| {
        let v = c1[(i, j)] * bias;
        if i == j {
            v + fl
        } else {
            v
        }
    }));
    let residual = match unit.route {
        // The rounded f64 copy would hide the working-precision residual.
        SolveRoute::LyapunovExtended { .. } => bias.abs() * unit.residual,
        _ => steady_state_residual(&c, w, f, drive.dephasing()),
    };
    NessSolution {
        density: c.density(),
        site_currents: unit.site_currents.iter().map(|j| bias * j).collect(),
        current: bias * unit.current,
        boundary_in: bias * unit.boundary_in,
        boundary_out: bias * unit.boundary_out,
        inhomogeneity: bias.abs() * unit.inhomogeneity,
        residual,
        route: unit.route,
        covariance: c,
    }
}

fn solve_double(
    w: &Drift,
    f: &Injection,
    drive: &DriveSpec,
    opts: &SolverOptions,
) -> Result<NessSolution, SolverError> {
    let c = lyapunov_eigen_solve(w.to_dense().as_ref(), f.diagonal())?;
    finish(c, w, f, drive, opts, SolveRoute::LyapunovEigen)
}

/// Residual and homogeneity checks, then the derived observables.
fn finish(
    mut c: CovarianceMatrix,
    w: &Drift,
    f: &Injection,
    drive: &DriveSpec,
    opts: &SolverOptions,
    route: SolveRoute,
) -> Result<NessSolution, SolverError> {
    let residual = steady_state_residual(&c, w, f, drive.dephasing());
    let tolerance = opts.residual_tolerance * drive.gamma().max(1.0);
    if residual.is_nan() || residual > tolerance {
        return Err(SolverError::ResidualTooLarge { residual, tolerance });
    }
    if opts.hermitize {
        c.hermitize();
    }
    let currents = extract_currents(&c);
    let (boundary_in, boundary_out) = boundary_currents(&c, drive);
    let sol = NessSolution {
        density: c.density(),
        site_currents: currents.site_currents,
        current: currents.current,
        inhomogeneity: inhomogeneity(currents.current, currents.deviation, boundary_in, boundary_out),
        boundary_in,
        boundary_out,
        residual,
        route,
        covariance: c,
    };
    check_homogeneity(&sol)?;
    Ok(sol)
}

pub(crate) fn inhomogeneity(current: f64, bulk_deviation: f64, j_in: f64, j_out: f64) -> f64 {
    bulk_deviation
        .max((j_in - current).abs())
        .max((j_out + current).abs())
}

/// Continuity in the steady state makes every bond current equal. Checked on
/// the unit-bias problem, so the current never vanishes for a legitimate reason.
pub(crate) fn check_homogeneity(sol: &NessSolution) -> Result<(), SolverError> {
    let allowed = HOMOGENEITY_TOLERANCE * sol.current.abs() + f64::MIN_POSITIVE;
    if sol.inhomogeneity.is_nan() || sol.inhomogeneity > allowed {
        return Err(SolverError::NumericalBreakdown(format!(
            "bond currents differ by {:.3e} around J = {:.3e}; precision exhausted",
            sol.inhomogeneity, sol.current
        )));
    }
    Ok(())
}

/// `max |W C + C W† + Γ Δ(C) - F|`, using the tridiagonal structure of `W`.
pub fn steady_state_residual(c: &CovarianceMatrix, w: &Drift, f: &Injection, dephasing: f64) -> f64 {
    let n = c.len();
    let d = w.diagonal();
    let hop = Drift::OFF_DIAGONAL;
    let cm = c.as_mat();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut r = (d[i] + d[j].conj()) * cm[(i, j)];
            if i > 0 {
                r += hop * cm[(i - 1, j)];
            }
            if i + 1 < n {
                r += hop * cm[(i + 1, j)];
            }
            if j > 0 {
                r += hop.conj() * cm[(i, j - 1)];
            }
            if j + 1 < n {
                r += hop.conj() * cm[(i, j + 1)];
            }
            if i == j {
                r -= f.diagonal()[i];
            } else {
                r += dephasing * cm[(i, j)];
            }
            worst = worst.max(r.norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests;
