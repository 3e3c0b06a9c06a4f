//! Steady-state transport in boundary-driven quasiperiodic tight-binding chains.
//!
//! A chain of `L` sites with hopping `-1` and on-site potential `λ V_i`
//! (clean, Aubry–André–Harper or Fibonacci) is coupled at both ends to
//! Lindblad baths with rate `γ` and occupations `f1`, `fL`, optionally with
//! bulk dephasing `Γ`. The steady state is Gaussian and fully described by the
//! covariance matrix `C_ij = <c_j† c_i>`.
//!
//! * [`model`]: potentials, chain and drive parameters, `h`, `W`, `F`.
//! * [`ness`]: steady-state solvers and currents.
//! * [`oracle`]: brute-force Lindblad solver for small chains.
//! * [`analysis`]: scaling fits and transport classification.
//! * [`sweep`]: parameter sweeps with caching and CSV/JSON output.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod model;
pub mod ness;
pub mod oracle;
pub mod sweep;

pub use analysis::{
    classify_transport, conductivity, dephasing_length, fit_localization_decay, fit_small_gamma_beta,
    fit_transport_exponent, piecewise_kappa_model, predicted_beta, AnalysisError, FitResult, FitWindow,
    ScalingSeries, TransportClass, TransportRegime,
};
pub use model::{
    build_drift_and_injection, build_hamiltonian, ChainSpec, Drift, DriveSpec, Hamiltonian, Injection,
    ModelError, ModelKind, PotentialKind, GOLDEN_RATIO,
};
pub use ness::{
    boundary_currents, extract_currents, solve_ness, CovarianceMatrix, NessSolution, Precision, SolveRoute,
    SolverError, SolverMethod, SolverOptions,
};
pub use oracle::{
    build_liouvillian, covariance_from_density, oracle_covariance, steady_state_dense, DenseLiouvillian,
    DensityMatrix, OracleError,
};
pub use sweep::{
    cache_key, fibonacci_sizes, run_sweep, solve_point, theta_grid, SweepConfig, SweepError, SweepRecord,
};
