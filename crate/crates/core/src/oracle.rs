//! Exact many-body steady state for small chains.
//!
//! Builds the full Lindblad generator on the `4^L`-dimensional operator space
//! using a Jordan–Wigner representation of the fermions, finds its null
//! vector, and reads off the covariance matrix. Exponential cost; intended as
//! ground truth for the covariance solvers.

use faer::{Mat, Scale};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ChainSpec, DriveSpec, Hamiltonian};
use crate::ness::CovarianceMatrix;

/// Largest chain the oracle accepts (a 4096 × 4096 generator).
pub const MAX_ORACLE_LENGTH: usize = 6;
/// Required ratio between the two smallest pivots of the generator's QR.
pub const NULLITY_GAP: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("chain length {length} exceeds the oracle limit of {MAX_ORACLE_LENGTH}")]
    SizeTooLarge { length: usize },
    #[error("steady state is not unique: pivot gap {gap:.3e} below {NULLITY_GAP:.0e}")]
    NonUniqueSteadyState { gap: f64 },
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sparse operator on the Fock space: for each input basis state, the
/// single output state and amplitude (all operators used here are monomials).
#[derive(Clone, Debug)]
struct Monomial(Vec<Option<(usize, f64)>>);

/// `c_i` with the string `(-1)^{Σ_{j<i} n_j}`; basis index `s = Σ n_i 2^i`.
fn annihilator(sites: usize, i: usize) -> Monomial {
    Monomial(
        (0..1usize << sites)
            .map(|s| {
                if s >> i & 1 == 1 {
                    let parity = (s & ((1 << i) - 1)).count_ones();
                    let sign = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
                    Some((s ^ (1 << i), sign))
                } else {
                    None
                }
            })
            .collect(),
    )
}

fn creator(sites: usize, i: usize) -> Monomial {
    let c = annihilator(sites, i);
    let mut out = vec![None; c.0.len()];
    for (s, e) in c.0.iter().enumerate() {
        if let Some((t, a)) = *e {
            out[t] = Some((s, a));
        }
    }
    Monomial(out)
}

/// `a ∘ b` (apply `b` first).
fn compose(a: &Monomial, b: &Monomial) -> Monomial {
    Monomial(
        b.0.iter()
            .map(|e| e.and_then(|(t, x)| a.0[t].map(|(u, y)| (u, x * y))))
            .collect(),
    )
}

fn dense(op: &Monomial) -> Mat<Complex64> {
    let d = op.0.len();
    let mut m = Mat::zeros(d, d);
    for (s, e) in op.0.iter().enumerate() {
        if let Some((t, a)) = *e {
            m[(t, s)] += Complex64::new(a, 0.0);
        }
    }
    m
}

fn nonzeros(m: &Mat<Complex64>) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

/// Many-body Hamiltonian `Σ λV_i n_i - Σ (c_i† c_{i+1} + h.c.)`.
fn many_body_hamiltonian(spec: &ChainSpec) -> Mat<Complex64> {
    let l = spec.length();
    let d = 1usize << l;
    let mut h = Mat::<Complex64>::zeros(d, d);
    let onsite = spec.onsite_energies();
    let c: Vec<Monomial> = (0..l).map(|i| annihilator(l, i)).collect();
    let cd: Vec<Monomial> = (0..l).map(|i| creator(l, i)).collect();
    for i in 0..l {
        h += dense(&compose(&cd[i], &c[i])) * Scale(Complex64::new(onsite[i], 0.0));
    }
    for i in 0..l.saturating_sub(1) {
        let hop = dense(&compose(&cd[i], &c[i + 1])) + dense(&compose(&cd[i + 1], &c[i]));
        h += hop * Scale(Complex64::new(Hamiltonian::HOPPING, 0.0));
    }
    h
}

/// Lindblad generator acting on column-major `vec(ρ)`, index `r + c·2^L`.
#[derive(Clone, Debug)]
pub struct DenseLiouvillian {
    length: usize,
    matrix: Mat<Complex64>,
}

impl DenseLiouvillian {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn matrix(&self) -> &Mat<Complex64> {
        &self.matrix
    }

    /// `max_j |Σ_r L[(r,r), j]|`: deviation from trace preservation.
    pub fn trace_defect(&self) -> f64 {
        let d = 1usize << self.length;
        let n = d * d;
        (0..n)
            .map(|j| {
                (0..d)
                    .map(|r| self.matrix[(r + r * d, j)])
                    .sum::<Complex64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |L(ρ)|`.
    pub fn apply_residual(&self, rho: &DensityMatrix) -> f64 {
        let d = rho.0.nrows();
        let n = d * d;
        let mut worst: f64 = 0.0;
        for p in 0..n {
            let mut acc = ZERO;
            for q in 0..n {
                let v = self.matrix[(p, q)];
                if v != ZERO {
                    acc += v * rho.0[(q % d, q / d)];
                }
            }
            worst = worst.max(acc.norm());
        }
        worst
    }
}

/// `L += coeff · (Bᵀ ⊗ A)`, i.e. `ρ ↦ coeff · A ρ B`.
fn add_sandwich(
    l: &mut Mat<Complex64>,
    d: usize,
    a: &[(usize, usize, Complex64)],
    b: &[(usize, usize, Complex64)],
    coeff: Complex64,
) {
    for &(r, rp, av) in a {
        for &(cp, c, bv) in b {
            l[(r + c * d, rp + cp * d)] += coeff * av * bv;
        }
    }
}

pub fn build_liouvillian(spec: &ChainSpec, drive: &DriveSpec) -> Result<DenseLiouvillian, OracleError> {
    let l = spec.length();
    if l > MAX_ORACLE_LENGTH {
        return Err(OracleError::SizeTooLarge { length: l });
    }
    let d = 1usize << l;
    let n = d * d;
    let identity: Vec<(usize, usize, Complex64)> = (0..d).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect();
    let mut gen = Mat::<Complex64>::zeros(n, n);

    let h = nonzeros(&many_body_hamiltonian(spec));
    add_sandwich(&mut gen, d, &h, &identity, Complex64::new(0.0, -1.0));
    add_sandwich(&mut gen, d, &identity, &h, Complex64::new(0.0, 1.0));

    let (gamma, f1, fl, deph) = (drive.gamma(), drive.f1(), drive.f_l(), drive.dephasing());
    let first = annihilator(l, 0);
    let last = annihilator(l, l - 1);
    let mut jumps: Vec<(f64, Monomial)> = vec![
        (gamma * (1.0 - f1), first.clone()),
        (gamma * f1, creator(l, 0)),
        (gamma * (1.0 - fl), last.clone()),
        (gamma * fl, creator(l, l - 1)),
    ];
    if deph > 0.0 {
        for i in 0..l {
            jumps.push((deph, compose(&creator(l, i), &annihilator(l, i))));
        }
    }
    for (rate, op) in jumps {
        if rate == 0.0 {
            continue;
        }
        let j = dense(&op);
        let jd = j.adjoint().to_owned();
        let jdj = &jd * &j;
        let (j, jd, jdj) = (nonzeros(&j), nonzeros(&jd), nonzeros(&jdj));
        let rate = Complex64::new(rate, 0.0);
        add_sandwich(&mut gen, d, &j, &jd, rate);
        add_sandwich(&mut gen, d, &jdj, &identity, -0.5 * rate);
        add_sandwich(&mut gen, d, &identity, &jdj, -0.5 * rate);
    }
    Ok(DenseLiouvillian {
        length: l,
        matrix: gen,
    })
}

/// Many-body density matrix in the occupation basis.
#[derive(Clone, Debug)]
pub struct DensityMatrix(Mat<Complex64>);

impl DensityMatrix {
    pub fn new(mat: Mat<Complex64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols());
        assert!(mat.nrows().is_power_of_two());
        DensityMatrix(mat)
    }

    pub fn as_mat(&self) -> &Mat<Complex64> {
        &self.0
    }

    pub fn sites(&self) -> usize {
        self.0.nrows().trailing_zeros() as usize
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.0.nrows()).map(|i| self.0[(i, i)]).sum()
    }

    /// Product state with every site empty (`false`) or filled (`true`).
    pub fn product(occupied: &[bool]) -> Self {
        let d = 1usize << occupied.len();
        let s: usize = occupied.iter().enumerate().map(|(i, &o)| (o as usize) << i).sum();
        let mut m = Mat::zeros(d, d);
        m[(s, s)] = Complex64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map(|ev| ev.into_iter().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NAN)
    }
}

/// Null vector of the generator via column-pivoted QR, normalised to unit trace.
pub fn steady_state_dense(liouvillian: &DenseLiouvillian) -> Result<DensityMatrix, OracleError> {
    let a = &liouvillian.matrix;
    let n = a.nrows();
    let d = 1usize << liouvillian.length;
    let qr = a.col_piv_qr();
    let r = qr.thin_R();
    let (fwd, _) = qr.P().arrays();

    let last = r[(n - 1, n - 1)].norm();
    let prev = r[(n - 2, n - 2)].norm();
    let gap = if last == 0.0 { f64::INFINITY } else { prev / last };
    if !(gap >= NULLITY_GAP) {
        return Err(OracleError::NonUniqueSteadyState { gap });
    }

    // A P = Q R: back-substitute R₁₁ y = -r₁₂ with the last permuted entry = 1
    let mut y = vec![ZERO; n];
    y[n - 1] = Complex64::new(1.0, 0.0);
    for i in (0..n - 1).rev() {
        let mut acc = ZERO;
        for k in i + 1..n {
            acc += r[(i, k)] * y[k];
        }
        y[i] = -acc / r[(i, i)];
    }
    let mut x = vec![ZERO; n];
    for (j, &col) in fwd.iter().enumerate() {
        x[col] = y[j];
    }

    let mut rho = Mat::from_fn(d, d, |i, j| x[i + j * d]);
    let tr: Complex64 = (0..d).map(|i| rho[(i, i)]).sum();
    for j in 0..d {
        for i in 0..d {
            rho[(i, j)] /= tr;
        }
    }
    let mut rho = DensityMatrix(rho);
    for j in 0..d {
        for i in 0..j {
            let avg = 0.5 * (rho.0[(i, j)] + rho.0[(j, i)].conj());
            rho.0[(i, j)] = avg;
            rho.0[(j, i)] = avg.conj();
        }
        rho.0[(j, j)].im = 0.0;
    }
    Ok(rho)
}

/// `C_ij = tr(ρ c_j† c_i)`.
pub fn covariance_from_density(rho: &DensityMatrix) -> CovarianceMatrix {
    let l = rho.sites();
    let c: Vec<Monomial> = (0..l).map(|i| annihilator(l, i)).collect();
    let cd: Vec<Monomial> = (0..l).map(|i| creator(l, i)).collect();
    let mut out = Mat::<Complex64>::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let op = compose(&cd[j], &c[i]);
            // tr(ρ A) = Σ_a ρ[a, A(a)] · amplitude
            out[(i, j)] =
                op.0.iter()
                    .enumerate()
                    .filter_map(|(a, e)| e.map(|(b, amp)| rho.0[(a, b)] * amp))
                    .sum();
        }
    }
    CovarianceMatrix::new(out)
}

/// Convenience: covariance of the exact steady state.
pub fn oracle_covariance(spec: &ChainSpec, drive: &DriveSpec) -> Result<CovarianceMatrix, OracleError> {
    let gen = build_liouvillian(spec, drive)?;
    Ok(covariance_from_density(&steady_state_dense(&gen)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialKind;
    use crate::ness::{extract_currents, solve_ness, SolverOptions};
    use approx::assert_relative_eq;

    fn drive(g: f64, f1: f64, fl: f64, deph: f64) -> DriveSpec {
        DriveSpec::new(g, f1, fl, deph).unwrap()
    }

    #[test]
    fn fermionic_anticommutation() {
        let l = 3;
        for i in 0..l {
            for j in 0..l {
                let ci = dense(&annihilator(l, i));
                let cdj = dense(&creator(l, j));
                let anti = &ci * &cdj + &cdj * &ci;
                for a in 0..8 {
                    for b in 0..8 {
                        let expect = if i == j && a == b { 1.0 } else { 0.0 };
                        assert_eq!(anti[(a, b)], Complex64::new(expect, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn single_site_detailed_balance() {
        let spec = ChainSpec::unchecked(1, 0.0, PotentialKind::Clean);
        let f = 0.3;
        // both baths act on the single site
        let gen = build_liouvillian(&spec, &drive(1.0, f, f, 0.0)).unwrap();
        let rho = steady_state_dense(&gen).unwrap();
        assert_relative_eq!(rho.as_mat()[(0, 0)].re, 1.0 - f, epsilon = 1e-12);
        assert_relative_eq!(rho.as_mat()[(1, 1)].re, f, epsilon = 1e-12);
    }

    #[test]
    fn generator_preserves_trace() {
        let spec = ChainSpec::new(3, 0.7, PotentialKind::aah(0.2)).unwrap();
        let gen = build_liouvillian(&spec, &drive(1.3, 0.9, 0.2, 0.4)).unwrap();
        assert!(gen.trace_defect() < 1e-12);
    }

    #[test]
    fn rejects_large_chains() {
        let spec = ChainSpec::clean(7).unwrap();
        assert_eq!(
            build_liouvillian(&spec, &DriveSpec::standard(0.0).unwrap()).unwrap_err(),
            OracleError::SizeTooLarge { length: 7 }
        );
    }

    #[test]
    fn no_baths_is_not_unique() {
        let spec = ChainSpec::clean(2).unwrap();
        let gen = build_liouvillian(&spec, &drive(1.0, 0.0, 0.0, 0.0)).unwrap();
        // empty baths pin a unique vacuum state
        assert!(steady_state_dense(&gen).is_ok());
        let mut m = gen.matrix.clone();
        m.fill(ZERO);
        let zero = DenseLiouvillian { length: 2, matrix: m };
        assert!(matches!(
            steady_state_dense(&zero),
            Err(OracleError::NonUniqueSteadyState { .. })
        ));
    }

    #[test]
    fn symmetric_driving_half_filling() {
        let spec = ChainSpec::clean(2).unwrap();
        let c = oracle_covariance(&spec, &drive(1.0, 0.5, 0.5, 0.0)).unwrap();
        assert_relative_eq!(c.get(0, 0).re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.get(1, 1).re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn product_states() {
        let vac = covariance_from_density(&DensityMatrix::product(&[false; 3]));
        let full = covariance_from_density(&DensityMatrix::product(&[true; 3]));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(vac.get(i, j), ZERO);
                let e = if i == j { 1.0 } else { 0.0 };
                assert_eq!(full.get(i, j), Complex64::new(e, 0.0));
            }
        }
    }

    #[test]
    fn two_site_current_matches_solver() {
        let spec = ChainSpec::clean(2).unwrap();
        let d = DriveSpec::standard(0.0).unwrap();
        let c = oracle_covariance(&spec, &d).unwrap();
        assert_relative_eq!(extract_currents(&c).current, 0.4, epsilon = 1e-10);
        let sol = solve_ness(&spec, &d, &SolverOptions::default()).unwrap();
        assert!(c.max_abs_diff(&sol.covariance) < 1e-10);
    }

    #[test]
    fn three_site_steady_state() {
        let spec = ChainSpec::clean(3).unwrap();
        let d = DriveSpec::standard(0.0).unwrap();
        let gen = build_liouvillian(&spec, &d).unwrap();
        let rho = steady_state_dense(&gen).unwrap();
        assert!(gen.apply_residual(&rho) < 1e-11);
        assert!(rho.min_eigenvalue() > -1e-10);
        assert_relative_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        let c = covariance_from_density(&rho);
        let j = extract_currents(&c);
        assert!(j.current > 0.0);
        assert!(j.deviation < 1e-10);
        let (j_in, j_out) = crate::ness::boundary_currents(&c, &d);
        assert_relative_eq!(j_in, j.current, epsilon = 1e-10);
        assert_relative_eq!(j_out, -j.current, epsilon = 1e-10);
        let (c11, cll) = (c.get(0, 0).re, c.get(2, 2).re);
        assert!(0.0 <= cll && cll <= c11 && c11 <= 1.0);
        let sol = solve_ness(&spec, &d, &SolverOptions::default()).unwrap();
        assert!(c.max_abs_diff(&sol.covariance) < 1e-10);
    }

    #[test]
    fn dephased_aah_chain_matches_solver() {
        let spec = ChainSpec::new(4, 1.0, PotentialKind::aah(0.3)).unwrap();
        let d = drive(1.0, 1.0, 0.0, 0.5);
        let c = oracle_covariance(&spec, &d).unwrap();
        let sol = solve_ness(&spec, &d, &SolverOptions::default()).unwrap();
        assert!(c.max_abs_diff(&sol.covariance) < 1e-8);
        assert!(extract_currents(&c).deviation < 1e-10);
    }
}
