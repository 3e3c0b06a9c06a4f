//! Multiprecision eigenbasis solver for `W C + C W† = F`.
//!
//! In the localized phase the eigenvalues of `W` approach the imaginary axis
//! exponentially in `L`, and the steady-state current becomes exponentially
//! small. Both are far below double-precision resolution, so the eigenbasis
//! formula is evaluated with MPFR floats instead.
//!
//! `K = -iW` is complex symmetric and tridiagonal with unit off-diagonal
//! magnitude. Its eigenvalues are refined from double-precision guesses by
//! Aberth iteration on `det(z - K)`, eigenvectors come from twisted
//! recurrences, and `U⁻¹ = diag(1/(uᵀu)) Uᵀ` follows from the symmetry.

use faer::Mat;
use num_complex::Complex64;
use rug::{Assign, Float, Integer};

use super::mp::{log2_abs, Cx};
use super::{check_homogeneity, CovarianceMatrix, NessSolution, SolveRoute, SolverError, SolverOptions};
use crate::model::{Drift, DriveSpec, Injection};

/// Working precision is never raised beyond this many bits.
pub const MAX_PRECISION_BITS: u32 = 8192;
const MIN_PRECISION_BITS: u32 = 128;
const GUARD_BITS: u32 = 128;
const MAX_ABERTH_SWEEPS: usize = 200;

/// Covariance and observables evaluated at working precision.
#[derive(Clone, Debug)]
pub struct ExtendedSolution {
    pub covariance: CovarianceMatrix,
    pub bits: u32,
    pub site_currents: Vec<f64>,
    pub current: f64,
    pub boundary_in: f64,
    pub boundary_out: f64,
    pub density: Vec<f64>,
    pub residual: f64,
    pub inhomogeneity: f64,
}

fn round_bits(bits: f64) -> u32 {
    let b = bits.max(MIN_PRECISION_BITS as f64).ceil() as u32;
    b.div_ceil(64) * 64
}

/// Diagonal of `K = -iW`; the off-diagonal is `-1`.
fn k_diagonal(w: &Drift) -> Vec<Complex64> {
    debug_assert_eq!(Drift::OFF_DIAGONAL, Complex64::new(0.0, -1.0));
    w.diagonal()
        .iter()
        .map(|d| Complex64::new(0.0, -1.0) * d)
        .collect()
}

fn initial_guesses(kd: &[Complex64]) -> Result<Vec<Complex64>, SolverError> {
    let n = kd.len();
    let k = Mat::from_fn(n, n, |i, j| {
        if i == j {
            kd[i]
        } else if i.abs_diff(j) == 1 {
            Complex64::new(-1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let ev = k
        .eigenvalues()
        .map_err(|e| SolverError::NumericalBreakdown(format!("eigenvalues of K: {e:?}")))?;
    if ev.iter().any(|z| !z.is_finite()) {
        return Err(SolverError::NumericalBreakdown(
            "non-finite eigenvalue guess".into(),
        ));
    }
    Ok(ev)
}

/// `det(z - K)` and its derivative by the three-term recurrence.
fn char_poly(z: &Cx, kd: &[Cx]) -> (Cx, Cx) {
    let prec = z.prec();
    let mut tmp = Float::new(prec);
    let (mut p_prev, mut p) = (Cx::zero(prec), Cx::real(prec, 1.0));
    let (mut dp_prev, mut dp) = (Cx::zero(prec), Cx::zero(prec));
    for d in kd {
        let shift = z.sub(d);
        // p' ← p + (z - d) p' - p'_prev, then p ← (z - d) p - p_prev
        let mut dp_new = p.sub(&dp_prev);
        dp_new.fma(&shift, &dp, &mut tmp);
        let mut p_new = Cx::zero(prec);
        p_new.fma(&shift, &p, &mut tmp);
        let p_new = p_new.sub(&p_prev);
        dp_prev = std::mem::replace(&mut dp, dp_new);
        p_prev = std::mem::replace(&mut p, p_new);
    }
    (p, dp)
}

/// Simultaneous Newton refinement of all roots (Aberth–Ehrlich).
fn aberth(roots: &mut [Cx], kd: &[Cx], prec: u32) -> Result<(), SolverError> {
    let n = roots.len();
    let tol_log2 = -(prec as f64) + 16.0;
    for _ in 0..MAX_ABERTH_SWEEPS {
        let mut converged = true;
        for k in 0..n {
            let (p, dp) = char_poly(&roots[k], kd);
            if p.is_zero() {
                continue;
            }
            if dp.is_zero() || !p.is_finite() || !dp.is_finite() {
                return Err(SolverError::NumericalBreakdown(
                    "characteristic polynomial degenerate during root refinement".into(),
                ));
            }
            let newton = p.div(&dp);
            let mut repulsion = Cx::zero(prec);
            for j in 0..n {
                if j != k {
                    let r = roots[k].sub(&roots[j]).recip();
                    repulsion.re += &r.re;
                    repulsion.im += &r.im;
                }
            }
            let denom = Cx::real(prec, 1.0).sub(&newton.mul(&repulsion));
            let step = newton.div(&denom);
            if !step.is_finite() {
                return Err(SolverError::NumericalBreakdown("root refinement diverged".into()));
            }
            let scale = log2_abs(&roots[k].abs()).max(0.0);
            if log2_abs(&step.abs()) > tol_log2 + scale {
                converged = false;
            }
            roots[k] = roots[k].sub(&step);
        }
        if converged {
            return Ok(());
        }
    }
    Err(SolverError::NumericalBreakdown(
        "eigenvalue refinement did not converge".into(),
    ))
}

/// Smallest `|w_k + w̄_l| = |z_k - z̄_l|`, as a base-2 logarithm.
fn log2_min_denominator(roots: &[Cx]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..roots.len() {
        for l in k..roots.len() {
            best = best.min(log2_abs(&roots[k].sub(&roots[l].conj()).abs()));
        }
    }
    best
}

/// Eigenvalues of `K` at a precision sufficient for the Lyapunov denominators.
fn refined_spectrum(kd64: &[Complex64], mut prec: u32) -> Result<(Vec<Cx>, u32), SolverError> {
    let guesses = initial_guesses(kd64)?;
    let mut roots: Vec<Cx> = guesses.iter().map(|&z| Cx::from_c64(prec, z)).collect();
    loop {
        let kd: Vec<Cx> = kd64.iter().map(|&d| Cx::from_c64(prec, d)).collect();
        for r in roots.iter_mut() {
            r.set_prec(prec);
        }
        aberth(&mut roots, &kd, prec)?;
        // every eigenvalue of K lies strictly in the lower half plane
        let unresolved = roots.iter().any(|z| !z.im.is_sign_negative() || z.im.is_zero());
        let eta = log2_min_denominator(&roots);
        let needed = if unresolved || !eta.is_finite() {
            2 * prec
        } else {
            round_bits(-2.0 * eta + GUARD_BITS as f64)
        };
        if needed <= prec && eta > -(prec as f64) / 2.0 {
            return Ok((roots, prec));
        }
        let next = needed.max(prec + 64);
        if next > MAX_PRECISION_BITS {
            return Err(SolverError::SingularSystem(format!(
                "Lyapunov denominators need more than {MAX_PRECISION_BITS} bits"
            )));
        }
        prec = next;
    }
}

/// Eigenvector of the tridiagonal `K` for eigenvalue `z`, glued at the twist
/// index that minimises the residual of the unmatched row.
fn twisted_eigenvector(z: &Cx, kd: &[Cx]) -> Vec<Cx> {
    let n = kd.len();
    let prec = z.prec();
    let mut tmp = Float::new(prec);
    let shift: Vec<Cx> = kd.iter().map(|d| d.sub(z)).collect();

    let mut uf = vec![Cx::zero(prec); n];
    uf[0] = Cx::real(prec, 1.0);
    for i in 0..n - 1 {
        let mut next = Cx::zero(prec);
        next.fma(&shift[i], &uf[i], &mut tmp);
        if i > 0 {
            next = next.sub(&uf[i - 1]);
        }
        uf[i + 1] = next;
    }
    let mut ub = vec![Cx::zero(prec); n];
    ub[n - 1] = Cx::real(prec, 1.0);
    for i in (1..n).rev() {
        let mut prev = Cx::zero(prec);
        prev.fma(&shift[i], &ub[i], &mut tmp);
        if i + 1 < n {
            prev = prev.sub(&ub[i + 1]);
        }
        ub[i - 1] = prev;
    }

    let mut twist = 0;
    let mut best: Option<Float> = None;
    for t in 0..n {
        if uf[t].is_zero() || ub[t].is_zero() {
            continue;
        }
        let mut g = shift[t].clone();
        if t > 0 {
            g = g.sub(&uf[t - 1].div(&uf[t]));
        }
        if t + 1 < n {
            g = g.sub(&ub[t + 1].div(&ub[t]));
        }
        let gn = g.norm_sqr();
        if best.as_ref().is_none_or(|b| gn < *b) {
            best = Some(gn);
            twist = t;
        }
    }

    let inv_f = uf[twist].recip();
    let inv_b = ub[twist].recip();
    (0..n)
        .map(|i| {
            if i <= twist {
                uf[i].mul(&inv_f)
            } else {
                ub[i].mul(&inv_b)
            }
        })
        .collect()
}

/// `C` in working precision: upper triangle computed, lower by conjugation.
fn assemble(
    roots: &[Cx],
    kd: &[Cx],
    sources: &[(usize, f64)],
    prec: u32,
) -> Result<Vec<Vec<Cx>>, SolverError> {
    let mut tmp = Float::new(prec);
    let n = roots.len();
    // u[k][i]: eigenvector k, unnormalised
    let u: Vec<Vec<Cx>> = roots.iter().map(|z| twisted_eigenvector(z, kd)).collect();

    // a[b][k] = u_k(b) / (u_kᵀ u_k): rows of U⁻¹ at the source sites
    let mut inv_norm = Vec::with_capacity(n);
    for uk in &u {
        let mut bil = Cx::zero(prec);
        let mut herm = Float::new(prec);
        for x in uk {
            bil.fma(x, x, &mut tmp);
            herm += x.norm_sqr();
        }
        // (uᵀu) can only vanish for a defective K; guard against near-defectiveness
        if log2_abs(&bil.abs()) < log2_abs(&herm) - 40.0 {
            return Err(SolverError::NumericalBreakdown(
                "eigenvector with near-zero bilinear norm".into(),
            ));
        }
        inv_norm.push(bil.recip());
    }
    let a: Vec<Vec<Cx>> = sources
        .iter()
        .map(|&(b, _)| (0..n).map(|k| u[k][b].mul(&inv_norm[k])).collect())
        .collect();

    // X_kl = Σ_b F_b a_b[k] conj(a_b[l]) / (i (z_k - z̄_l)); x[l][k] column-wise
    let mut x = vec![vec![Cx::zero(prec); n]; n];
    for l in 0..n {
        for k in 0..n {
            let mut num = Cx::zero(prec);
            for (s, &(_, fb)) in sources.iter().enumerate() {
                let mut term = Cx::zero(prec);
                term.fma_conj(&a[s][k], &a[s][l], &mut tmp);
                num = num.add(&term.scale(&Float::with_val(prec, fb)));
            }
            let diff = roots[k].sub(&roots[l].conj());
            // i (z_k - z̄_l)
            let den = Cx {
                re: Float::with_val(prec, -&diff.im),
                im: diff.re,
            };
            x[l][k] = num.div(&den);
        }
    }

    // The products below only need absolute accuracy (|U| = O(1)), so they
    // run in fixed point on GMP integers scaled by 2^prec, which is cheaper
    // than floating-point multiprecision.
    let fixed = |v: &Float| -> Result<Integer, SolverError> {
        Float::with_val(prec, v << prec)
            .to_integer()
            .ok_or_else(|| SolverError::NumericalBreakdown("non-finite Lyapunov coefficient".into()))
    };
    let to_fixed = |z: &Cx| -> Result<(Integer, Integer), SolverError> { Ok((fixed(&z.re)?, fixed(&z.im)?)) };
    // ut[i][k] = U_ik, xt[l][k] = X_kl
    let ut = (0..n)
        .map(|i| (0..n).map(|k| to_fixed(&u[k][i])).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    drop(u);
    let xt = x
        .iter()
        .map(|col| col.iter().map(to_fixed).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    drop(x);

    // T = U X, rescaled to 2^prec
    let mut t = vec![vec![(Integer::new(), Integer::new()); n]; n];
    for i in 0..n {
        for l in 0..n {
            let (re, im) = &mut t[i][l];
            for ((ur, ui), (xr, xi)) in ut[i].iter().zip(&xt[l]) {
                *re += ur * xr;
                *re -= ui * xi;
                *im += ur * xi;
                *im += ui * xr;
            }
            *re >>= prec;
            *im >>= prec;
        }
    }
    drop(xt);

    // C = T U†, upper triangle, scale 2^(2 prec)
    let mut c = vec![vec![Cx::zero(prec); n]; n];
    let (mut re, mut im) = (Integer::new(), Integer::new());
    for i in 0..n {
        for j in i..n {
            re.assign(0);
            im.assign(0);
            for ((tr, ti), (ur, ui)) in t[i].iter().zip(&ut[j]) {
                re += tr * ur;
                re += ti * ui;
                im += ti * ur;
                im -= tr * ui;
            }
            let z = &mut c[i][j];
            z.re.assign(&re);
            z.re >>= 2 * prec;
            if i != j {
                z.im.assign(&im);
                z.im >>= 2 * prec;
            }
        }
    }
    for i in 1..n {
        let (upper, lower) = c.split_at_mut(i);
        for (j, row) in upper.iter().enumerate() {
            lower[0][j] = row[i].conj();
        }
    }
    if c.iter().flatten().any(|z| !z.is_finite()) {
        return Err(SolverError::NumericalBreakdown(
            "non-finite covariance entry".into(),
        ));
    }
    Ok(c)
}

fn residual(c: &[Vec<Cx>], wd: &[Cx], f: &Injection, prec: u32) -> f64 {
    let n = c.len();
    let mut worst = Float::new(prec);
    let mut tmp = Float::new(prec);
    let hop = Cx::from_c64(prec, Drift::OFF_DIAGONAL);
    let hop_c = hop.conj();
    for i in 0..n {
        for j in 0..n {
            let mut r = Cx::zero(prec);
            r.fma(&wd[i].add(&wd[j].conj()), &c[i][j], &mut tmp);
            if i > 0 {
                r.fma(&hop, &c[i - 1][j], &mut tmp);
            }
            if i + 1 < n {
                r.fma(&hop, &c[i + 1][j], &mut tmp);
            }
            if j > 0 {
                r.fma(&hop_c, &c[i][j - 1], &mut tmp);
            }
            if j + 1 < n {
                r.fma(&hop_c, &c[i][j + 1], &mut tmp);
            }
            if i == j {
                r.re -= f.diagonal()[i];
            }
            let a = r.abs();
            if a > worst {
                worst = a;
            }
        }
    }
    worst.to_f64()
}

fn solve_at(
    w: &Drift,
    f: &Injection,
    drive: &DriveSpec,
    start_bits: u32,
) -> Result<ExtendedSolution, SolverError> {
    let n = w.len();
    let kd64 = k_diagonal(w);
    let (roots, prec) = refined_spectrum(&kd64, start_bits)?;
    let kd: Vec<Cx> = kd64.iter().map(|&d| Cx::from_c64(prec, d)).collect();
    let sources: Vec<(usize, f64)> = f.nonzero().collect();
    let c = assemble(&roots, &kd, &sources, prec)?;

    let wd: Vec<Cx> = w.diagonal().iter().map(|&d| Cx::from_c64(prec, d)).collect();
    let res = residual(&c, &wd, f, prec);

    // currents at working precision; f1 - C_11 cancels catastrophically in f64
    let site: Vec<Float> = (0..n - 1)
        .map(|i| Float::with_val(prec, &c[i][i + 1].im * -2.0))
        .collect();
    let mut mean = Float::new(prec);
    for j in &site {
        mean += j;
    }
    if !site.is_empty() {
        mean /= site.len() as f64;
    }
    let mut dev = Float::new(prec);
    for j in &site {
        let d = Float::with_val(prec, j - &mean).abs();
        if d > dev {
            dev = d;
        }
    }
    let gamma = drive.gamma();
    let j_in = Float::with_val(prec, drive.f1() - &c[0][0].re) * gamma;
    let j_out = Float::with_val(prec, drive.f_l() - &c[n - 1][n - 1].re) * gamma;
    let current = mean.to_f64();
    let in_dev = Float::with_val(prec, &j_in - &mean).abs().to_f64();
    let out_dev = Float::with_val(prec, &j_out + &mean).abs().to_f64();

    let cov = CovarianceMatrix::new(Mat::from_fn(n, n, |i, j| c[i][j].to_c64()));
    Ok(ExtendedSolution {
        density: cov.density(),
        covariance: cov,
        bits: prec,
        site_currents: site.iter().map(Float::to_f64).collect(),
        current,
        boundary_in: j_in.to_f64(),
        boundary_out: j_out.to_f64(),
        residual: res,
        inhomogeneity: dev.to_f64().max(in_dev).max(out_dev),
    })
}

/// Solves `W C + C W† = F` in multiprecision, choosing the working precision
/// from the spectrum of `W`. Requires zero dephasing.
pub fn lyapunov_extended_solve(
    w: &Drift,
    f: &Injection,
    drive: &DriveSpec,
) -> Result<ExtendedSolution, SolverError> {
    if drive.dephasing() != 0.0 {
        return Err(SolverError::InvalidOptions(
            "the eigendecomposition route requires zero dephasing".into(),
        ));
    }
    solve_at(w, f, drive, 256)
}

/// Extended solve with validation; precision doubles on rejection.
pub(crate) fn solve_validated(
    w: &Drift,
    f: &Injection,
    drive: &DriveSpec,
    opts: &SolverOptions,
) -> Result<NessSolution, SolverError> {
    let tolerance = opts.residual_tolerance * drive.gamma().max(1.0);
    let mut bits = 256;
    loop {
        let s = solve_at(w, f, drive, bits)?;
        let used = s.bits;
        let verdict = if s.residual.is_nan() || s.residual > tolerance {
            Err(SolverError::ResidualTooLarge {
                residual: s.residual,
                tolerance,
            })
        } else {
            let sol = NessSolution {
                covariance: s.covariance,
                site_currents: s.site_currents,
                current: s.current,
                boundary_in: s.boundary_in,
                boundary_out: s.boundary_out,
                density: s.density,
                residual: s.residual,
                inhomogeneity: s.inhomogeneity,
                route: SolveRoute::LyapunovExtended { bits: used },
            };
            check_homogeneity(&sol).map(|_| sol)
        };
        match verdict {
            Ok(sol) => return Ok(sol),
            Err(e) if 2 * used > MAX_PRECISION_BITS => return Err(e),
            Err(_) => bits = 2 * used,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_drift_and_injection, ChainSpec, PotentialKind};

    #[test]
    fn bits_round_up_to_words() {
        assert_eq!(round_bits(10.0), 128);
        assert_eq!(round_bits(129.0), 192);
        assert_eq!(round_bits(256.0), 256);
    }

    #[test]
    fn aberth_recovers_clean_chain_spectrum() {
        // γ → 0 limit of a clean chain: eigenvalues -2 cos(kπ/(L+1))
        let l = 8;
        let kd64 = vec![Complex64::new(0.0, -1e-30); l];
        let (roots, _) = refined_spectrum(&kd64, 256).unwrap();
        let mut re: Vec<f64> = roots.iter().map(|z| z.re.to_f64()).collect();
        re.sort_by(f64::total_cmp);
        for (k, r) in re.iter().enumerate() {
            let exact = -2.0 * (std::f64::consts::PI * (k + 1) as f64 / (l + 1) as f64).cos();
            assert!((r - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn twisted_vectors_are_eigenvectors() {
        let spec = ChainSpec::new(12, 1.3, PotentialKind::aah(0.4)).unwrap();
        let drive = DriveSpec::standard(0.0).unwrap();
        let (w, _) = build_drift_and_injection(&spec, &drive);
        let kd64 = k_diagonal(&w);
        let (roots, prec) = refined_spectrum(&kd64, 128).unwrap();
        let kd: Vec<Cx> = kd64.iter().map(|&d| Cx::from_c64(prec, d)).collect();
        for z in &roots {
            let u = twisted_eigenvector(z, &kd);
            let n = u.len();
            let scale: f64 = u.iter().map(|x| x.abs().to_f64()).fold(0.0, f64::max);
            for i in 0..n {
                let mut r = kd[i].sub(z).mul(&u[i]).to_c64();
                if i > 0 {
                    r -= u[i - 1].to_c64();
                }
                if i + 1 < n {
                    r -= u[i + 1].to_c64();
                }
                assert!(r.norm() < 1e-14 * scale, "row {i}: {r}");
            }
        }
    }

    #[test]
    fn extended_matches_double_on_small_chain() {
        let spec = ChainSpec::new(10, 0.7, PotentialKind::aah(1.1)).unwrap();
        let drive = DriveSpec::standard(0.0).unwrap();
        let (w, f) = build_drift_and_injection(&spec, &drive);
        let ext = lyapunov_extended_solve(&w, &f, &drive).unwrap();
        let dbl = super::super::lyapunov_eigen_solve(w.to_dense().as_ref(), f.diagonal()).unwrap();
        assert!(ext.covariance.max_abs_diff(&dbl) < 1e-12);
        assert!(ext.residual < 1e-60);
        assert!(ext.inhomogeneity < 1e-60);
    }
}
