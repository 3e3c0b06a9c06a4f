//! Chain geometry, quasiperiodic potentials and the single-particle matrices
//! that drive the covariance dynamics.
//!
//! Site indices in this module are 1-based, matching the usual way the
//! potentials are written down. Storage (vectors, matrices) is 0-based, so
//! `diag[i - 1]` holds the on-site energy of site `i`.

use std::f64::consts::PI;
use std::fmt;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `(1 + sqrt 5) / 2`, evaluated in double precision.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("chain length must be at least 2, got {0}")]
    TooShort(usize),
    #[error("potential strength must be finite and non-negative, got {0}")]
    InvalidStrength(f64),
    #[error("phase must be finite, got {0}")]
    InvalidPhase(f64),
    #[error("bath coupling must be finite and positive, got {0}")]
    InvalidCoupling(f64),
    #[error("bath occupation {name} must lie in [0, 1], got {value}")]
    InvalidOccupation { name: &'static str, value: f64 },
    #[error("dephasing strength must be finite and non-negative, got {0}")]
    InvalidDephasing(f64),
}

/// On-site potential family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialKind {
    /// `V_i = 0`.
    Clean,
    /// Aubry-André-Harper cosine with phase `theta`, kept in `[0, 2π)`.
    Aah { theta: f64 },
    /// Binary Fibonacci-word potential.
    Fibonacci,
}

impl PotentialKind {
    /// AAH potential with the phase reduced into `[0, 2π)`.
    pub fn aah(theta: f64) -> Self {
        PotentialKind::Aah {
            theta: reduce_phase(theta),
        }
    }

    /// `V_i` for the 1-based site `i`.
    pub fn value(&self, site: usize) -> f64 {
        match *self {
            PotentialKind::Clean => 0.0,
            PotentialKind::Aah { theta } => aah_potential(site, theta),
            PotentialKind::Fibonacci => f64::from(fibonacci_potential(site)),
        }
    }

    /// Potential family without its phase.
    pub fn model(&self) -> ModelKind {
        match self {
            PotentialKind::Clean => ModelKind::Clean,
            PotentialKind::Aah { .. } => ModelKind::Aah,
            PotentialKind::Fibonacci => ModelKind::Fibonacci,
        }
    }
}

/// Potential family selector used by sweeps and the command line, where the
/// AAH phase is supplied separately (or averaged over).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Clean,
    Aah,
    Fibonacci,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Clean => "clean",
            ModelKind::Aah => "aah",
            ModelKind::Fibonacci => "fibonacci",
        }
    }

    /// Concrete potential; `theta` is ignored unless the family is AAH.
    pub fn with_phase(&self, theta: f64) -> PotentialKind {
        match self {
            ModelKind::Clean => PotentialKind::Clean,
            ModelKind::Aah => PotentialKind::aah(theta),
            ModelKind::Fibonacci => PotentialKind::Fibonacci,
        }
    }

    pub fn is_phase_dependent(&self) -> bool {
        matches!(self, ModelKind::Aah)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clean" => Ok(ModelKind::Clean),
            "aah" => Ok(ModelKind::Aah),
            "fibonacci" | "fib" => Ok(ModelKind::Fibonacci),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

fn reduce_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// `2 cos(2π g i + θ)` for the 1-based site `i`.
pub fn aah_potential(site: usize, theta: f64) -> f64 {
    2.0 * (TWO_PI * GOLDEN_RATIO * site as f64 + theta).cos()
}

/// The `i`-th digit (1-based) of the Fibonacci word, from the integer-part
/// formula `[(i+1)/g²] - [i/g²]`.
pub fn fibonacci_potential(site: usize) -> u8 {
    let g2 = GOLDEN_RATIO * GOLDEN_RATIO;
    let hi = ((site + 1) as f64 / g2).floor();
    let lo = (site as f64 / g2).floor();
    (hi - lo) as u8
}

/// Fibonacci word built by concatenation, starting from `S_0 = 0` and
/// `S_1 = 01`. Each word extends the previous one.
pub fn fibonacci_word(n: usize) -> Vec<u8> {
    let mut prev = vec![0u8];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0u8, 1];
    for _ in 1..n {
        let mut next = cur.clone();
        next.extend_from_slice(&prev);
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Chain geometry and potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    length: usize,
    lambda: f64,
    kind: PotentialKind,
}

impl ChainSpec {
    pub fn new(length: usize, lambda: f64, kind: PotentialKind) -> Result<Self, ModelError> {
        if length < 2 {
            return Err(ModelError::TooShort(length));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ModelError::InvalidStrength(lambda));
        }
        let kind = match kind {
            PotentialKind::Aah { theta } if !theta.is_finite() => {
                return Err(ModelError::InvalidPhase(theta))
            }
            PotentialKind::Aah { theta } => PotentialKind::aah(theta),
            other => other,
        };
        Ok(ChainSpec { length, lambda, kind })
    }

    /// Bypasses validation; the oracle's single-site checks need `L = 1`.
    #[cfg(test)]
    pub(crate) fn unchecked(length: usize, lambda: f64, kind: PotentialKind) -> Self {
        ChainSpec { length, lambda, kind }
    }

    pub fn clean(length: usize) -> Result<Self, ModelError> {
        Self::new(length, 0.0, PotentialKind::Clean)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// `λ V_i` for every site, in site order.
    pub fn onsite_energies(&self) -> Vec<f64> {
        (1..=self.length)
            .map(|i| self.lambda * self.kind.value(i))
            .collect()
    }
}

/// Boundary baths and bulk dephasing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    gamma: f64,
    f1: f64,
    f_l: f64,
    dephasing: f64,
}

impl DriveSpec {
    pub fn new(gamma: f64, f1: f64, f_l: f64, dephasing: f64) -> Result<Self, ModelError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(ModelError::InvalidCoupling(gamma));
        }
        for (name, value) in [("f1", f1), ("fL", f_l)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::InvalidOccupation { name, value });
            }
        }
        if !(dephasing.is_finite() && dephasing >= 0.0) {
            return Err(ModelError::InvalidDephasing(dephasing));
        }
        Ok(DriveSpec {
            gamma,
            f1,
            f_l,
            dephasing,
        })
    }

    /// `γ = 1`, `f1 = 1`, `fL = 0` with the given dephasing.
    pub fn standard(dephasing: f64) -> Result<Self, ModelError> {
        Self::new(1.0, 1.0, 0.0, dephasing)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn f1(&self) -> f64 {
        self.f1
    }

    pub fn f_l(&self) -> f64 {
        self.f_l
    }

    pub fn dephasing(&self) -> f64 {
        self.dephasing
    }

    /// `f1 - fL`. Positive bias drives current from site 1 towards site L.
    pub fn bias(&self) -> f64 {
        self.f1 - self.f_l
    }

    pub fn with_dephasing(&self, dephasing: f64) -> Result<Self, ModelError> {
        Self::new(self.gamma, self.f1, self.f_l, dephasing)
    }
}

/// Real symmetric tridiagonal single-particle Hamiltonian with hopping `-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    diag: Vec<f64>,
}

impl Hamiltonian {
    pub const HOPPING: f64 = -1.0;

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Entry `(i, j)`, 0-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i.abs_diff(j) == 1 {
            Self::HOPPING
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.len();
        Mat::from_fn(n, n, |i, j| self.get(i, j))
    }
}

pub fn build_hamiltonian(spec: &ChainSpec) -> Hamiltonian {
    Hamiltonian {
        diag: spec.onsite_energies(),
    }
}

/// Drift matrix `W = i h + (γ/2)(P_1 + P_L)`, stored as a tridiagonal with
/// a constant off-diagonal `-i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Drift {
    diag: Vec<Complex64>,
}

impl Drift {
    pub const OFF_DIAGONAL: Complex64 = Complex64::new(0.0, Hamiltonian::HOPPING);

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diagonal(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            self.diag[i]
        } else if i.abs_diff(j) == 1 {
            Self::OFF_DIAGONAL
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        let n = self.len();
        Mat::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let hops = usize::from(i > 0) + usize::from(i + 1 < n);
                self.diag[i].norm() + hops as f64 * Self::OFF_DIAGONAL.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Diagonal injection matrix `F = diag(γ f1, 0, ..., 0, γ fL)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    diag: Vec<f64>,
}

impl Injection {
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `(site, value)` pairs with non-zero value, 0-based.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.diag.iter().copied().enumerate().filter(|&(_, v)| v != 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        let n = self.len();
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(self.diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

pub fn build_drift_and_injection(spec: &ChainSpec, drive: &DriveSpec) -> (Drift, Injection) {
    let n = spec.length();
    let half = 0.5 * drive.gamma();
    let mut diag: Vec<Complex64> = spec
        .onsite_energies()
        .into_iter()
        .map(|e| Complex64::new(0.0, e))
        .collect();
    diag[0].re += half;
    diag[n - 1].re += half;
    let mut inj = vec![0.0; n];
    inj[0] = drive.gamma() * drive.f1();
    inj[n - 1] += drive.gamma() * drive.f_l();
    (Drift { diag }, Injection { diag: inj })
}
