//! End-to-end acceptance run: every criterion prints one PASS/FAIL line, and
//! the process exits nonzero if any criterion fails. Takes roughly 20 minutes on one core.
//!
//! Set `QPCHAIN_ACCEPTANCE_DIR` to keep the CSV/JSON outputs of the sweeps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qpchain::{
    classify_transport, fibonacci_sizes, fit_localization_decay, fit_small_gamma_beta,
    fit_transport_exponent, oracle_covariance, predicted_beta, run_sweep, solve_ness, ChainSpec, DriveSpec,
    FitWindow, ModelKind, PotentialKind, ScalingSeries, SolveRoute, SolverOptions, SweepConfig, SweepRecord,
    TransportRegime,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const THETAS: usize = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Γ grid of the κ(Γ) sweeps: 25 points log-spaced over [1e-3, 1e1].
fn gamma_grid() -> Vec<f64> {
    (0..25).map(|k| 10f64.powf(-3.0 + k as f64 / 6.0)).collect()
}

/// The sweeps behind criteria 3–10, keyed by output file name.
fn sweeps() -> Vec<(&'static str, SweepConfig)> {
    let s34_610 = fibonacci_sizes(34, 610).unwrap();
    let s34_377 = fibonacci_sizes(34, 377).unwrap();
    let s34_233 = fibonacci_sizes(34, 233).unwrap();
    let large: Vec<f64> = gamma_grid().into_iter().filter(|&g| g >= 1.0 - 1e-12).collect();
    let aah = |lambdas: Vec<f64>, gammas: Vec<f64>, sizes: &[usize]| {
        SweepConfig::new(ModelKind::Aah, lambdas, gammas, sizes.to_vec()).with_theta_samples(THETAS)
    };
    let fib = |lambdas: Vec<f64>, gammas: Vec<f64>, sizes: &[usize]| {
        SweepConfig::new(ModelKind::Fibonacci, lambdas, gammas, sizes.to_vec())
    };
    vec![
        ("aah_ballistic.csv", aah(vec![0.5], vec![0.0], &s34_610)),
        ("aah_critical.csv", aah(vec![1.0], vec![0.0], &s34_610)),
        ("aah_localized.csv", aah(vec![1.5], vec![0.0], &s34_233)),
        (
            "fib_exponents.csv",
            fib(vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0], &s34_610),
        ),
        ("aah_dephased.csv", aah(vec![1.0], vec![0.1], &s34_377)),
        ("fib_dephased.csv", fib(vec![2.0], vec![0.1], &s34_377)),
        (
            "clean_kappa.csv",
            SweepConfig::new(ModelKind::Clean, vec![0.0], large.clone(), vec![233]),
        ),
        ("fib_kappa_weak.csv", fib(vec![0.5], large.clone(), &[233])),
        ("aah_kappa_weak.csv", aah(vec![0.25], large, &[233])),
        ("fib_kappa.csv", fib(vec![4.0, 5.0], gamma_grid(), &[233])),
    ]
}

fn run_all(dir: &Path) -> BTreeMap<&'static str, Vec<SweepRecord>> {
    sweeps()
        .into_iter()
        .map(|(name, cfg)| {
            let t = Instant::now();
            let recs = run_sweep(&cfg.with_output(dir.join(name))).expect(name);
            eprintln!(
                "  sweep {name}: {} records in {:.1} s",
                recs.len(),
                t.elapsed().as_secs_f64()
            );
            (name, recs)
        })
        .collect()
}

fn select(recs: &[SweepRecord], lambda: f64) -> Vec<&SweepRecord> {
    recs.iter().filter(|r| r.lambda == lambda).collect()
}

fn size_series(recs: &[&SweepRecord]) -> ScalingSeries {
    ScalingSeries::new(recs.iter().map(|r| (r.length as f64, r.current)).collect()).unwrap()
}

fn gamma_series(recs: &[&SweepRecord]) -> ScalingSeries {
    ScalingSeries::new(recs.iter().map(|r| (r.dephasing, r.kappa)).collect()).unwrap()
}

fn nu_of(recs: &[SweepRecord], lambda: f64) -> f64 {
    let s = size_series(&select(recs, lambda));
    fit_transport_exponent(&s, &FitWindow::for_phase(false))
        .unwrap()
        .exponent
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let kinds = [ModelKind::Clean, ModelKind::Aah, ModelKind::Fibonacci];
    let mut worst_c: f64 = 0.0;
    let mut worst_j: f64 = 0.0;
    for _ in 0..50 {
        let length = rng.gen_range(2..=5);
        let kind = kinds[rng.gen_range(0..3)];
        let spec = ChainSpec::new(
            length,
            rng.gen_range(0.0..=2.0),
            kind.with_phase(rng.gen_range(0.0..std::f64::consts::TAU)),
        )
        .unwrap();
        let drive = DriveSpec::new(
            rng.gen_range(0.5..=2.0),
            rng.gen_range(0.0..=1.0),
            rng.gen_range(0.0..=1.0),
            [0.0, 0.1, 1.0][rng.gen_range(0..3)],
        )
        .unwrap();
        let exact = oracle_covariance(&spec, &drive).unwrap();
        let sol = solve_ness(&spec, &drive, &SolverOptions::default()).unwrap();
        worst_c = worst_c.max(sol.covariance.max_abs_diff(&exact));
        let exact_j = qpchain::extract_currents(&exact);
        for (a, b) in sol.site_currents.iter().zip(&exact_j.site_currents) {
            worst_j = worst_j.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_c <= 1e-8 && worst_j <= 1e-8 && secs < 60.0,
        format!("50 cases: max|ΔC| = {worst_c:.2e}, max|ΔJ| = {worst_j:.2e}, {secs:.1} s"),
    )
}

fn criterion_2(all: &[&SweepRecord]) -> Outcome {
    let failed = all.iter().filter(|r| !r.is_ok()).count();
    let worst = all
        .iter()
        .map(|r| r.max_relative_inhomogeneity)
        .fold(0.0, f64::max);
    outcome(
        failed == 0 && worst <= 1e-8,
        format!(
            "{} records, {failed} failed, max relative inhomogeneity {worst:.2e}",
            all.len()
        ),
    )
}

fn criterion_3(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let nu = nu_of(&runs["aah_ballistic.csv"], 0.5);
    outcome(nu.abs() < 0.1, format!("AAH λ=0.5: ν = {nu:.4}"))
}

fn criterion_4(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let nu = nu_of(&runs["aah_critical.csv"], 1.0);
    outcome(
        (1.05..=1.45).contains(&nu),
        format!("AAH λ=1: ν = {nu:.4} (window [1.05, 1.45])"),
    )
}

fn criterion_5(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let s = size_series(&select(&runs["aah_localized.csv"], 1.5));
    let power = fit_transport_exponent(&s, &FitWindow::for_phase(true)).unwrap();
    let exp = fit_localization_decay(&s).unwrap();
    let class = classify_transport(&power, &exp);
    outcome(
        exp.r_squared > 0.99 && class.regime == TransportRegime::Insulating,
        format!(
            "AAH λ=1.5: exponential r² = {:.5} (1/ξ = {:.4}), power-law r² = {:.5}, regime {}",
            exp.r_squared, exp.exponent, power.r_squared, class.regime
        ),
    )
}

fn criterion_6(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let recs = &runs["fib_exponents.csv"];
    let lambdas = [0.5, 1.0, 2.0, 3.0, 4.0];
    let nus: Vec<f64> = lambdas.iter().map(|&l| nu_of(recs, l)).collect();
    let increasing = nus.windows(2).all(|w| w[1] > w[0]);
    let nu3 = nus[3];
    let table: Vec<String> = lambdas
        .iter()
        .zip(&nus)
        .map(|(l, n)| format!("ν({l}) = {n:.3}"))
        .collect();
    outcome(
        increasing && (0.8..=1.2).contains(&nu3),
        format!("Fibonacci: {}", table.join(", ")),
    )
}

fn criterion_7(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let slope = |name: &str, lambda: f64| {
        let s = size_series(&select(&runs[name], lambda));
        -fit_transport_exponent(&s, &FitWindow::LastN(3)).unwrap().exponent
    };
    let a = slope("aah_dephased.csv", 1.0);
    let f = slope("fib_dephased.csv", 2.0);
    let ok = |s: f64| (s + 1.0).abs() <= 0.15;
    outcome(
        ok(a) && ok(f),
        format!("Γ=0.1 local slopes over L = 144..377: AAH λ=1 {a:.4}, Fibonacci λ=2 {f:.4}"),
    )
}

fn criterion_8(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let cases = [
        ("clean", "clean_kappa.csv", 0.0),
        ("Fibonacci λ=0.5", "fib_kappa_weak.csv", 0.5),
        ("AAH λ=0.25", "aah_kappa_weak.csv", 0.25),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut at_ten = Vec::new();
    for (label, name, lambda) in cases {
        let recs = select(&runs[name], lambda);
        let slope = fit_small_gamma_beta(&gamma_series(&recs), &FitWindow::Range { min: 1.0, max: 10.0 })
            .unwrap()
            .exponent;
        pass &= (slope + 1.0).abs() <= 0.1;
        let k10 = recs
            .iter()
            .find(|r| (r.dephasing - 10.0).abs() < 1e-9)
            .unwrap()
            .kappa;
        at_ten.push(k10);
        parts.push(format!("{label} slope {slope:.4}"));
    }
    let hi = at_ten.iter().cloned().fold(f64::MIN, f64::max);
    let lo = at_ten.iter().cloned().fold(f64::MAX, f64::min);
    let spread = hi / lo - 1.0;
    pass &= spread <= 0.1;
    outcome(
        pass,
        format!("{}; κ(Γ=10) spread {:.2}%", parts.join(", "), 100.0 * spread),
    )
}

fn criterion_9(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let recs = select(&runs["fib_kappa.csv"], 4.0);
    let first = recs.first().unwrap().kappa;
    let last = recs.last().unwrap().kappa;
    let (gmax, kmax) = recs
        .iter()
        .map(|r| (r.dephasing, r.kappa))
        .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    outcome(
        kmax >= 1.2 * first && kmax >= 1.2 * last,
        format!(
            "Fibonacci λ=4, L=233: κ_max = {kmax:.4e} at Γ = {gmax:.3e}; κ(1e-3) = {first:.4e}, κ(10) = {last:.4e}"
        ),
    )
}

fn criterion_10(runs: &BTreeMap<&str, Vec<SweepRecord>>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [4.0, 5.0] {
        let nu = nu_of(&runs["fib_exponents.csv"], lambda);
        let recs = select(&runs["fib_kappa.csv"], lambda);
        let beta = fit_small_gamma_beta(&gamma_series(&recs), &FitWindow::SMALL_GAMMA)
            .unwrap()
            .exponent;
        let predicted = predicted_beta(nu);
        pass &= (beta - predicted).abs() <= 0.2;
        parts.push(format!(
            "λ={lambda}: β = {beta:.4}, (ν-1)/(ν+1) = {predicted:.4} (ν = {nu:.3})"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_11() -> Outcome {
    let opts = SolverOptions::default();
    let t = Instant::now();
    let spec = ChainSpec::new(987, 1.0, PotentialKind::aah(0.0)).unwrap();
    let sol = solve_ness(&spec, &DriveSpec::new(1.0, 1.0, 0.0, 0.0).unwrap(), &opts).unwrap();
    let eigen = t.elapsed().as_secs_f64();
    let eigen_route = sol.route == SolveRoute::LyapunovEigen;

    let t = Instant::now();
    let spec = ChainSpec::new(233, 2.0, PotentialKind::Fibonacci).unwrap();
    let sol = solve_ness(&spec, &DriveSpec::new(1.0, 1.0, 0.0, 0.1).unwrap(), &opts).unwrap();
    let sparse = t.elapsed().as_secs_f64();
    let sparse_route = sol.route == SolveRoute::SparseVectorized;
    outcome(
        eigen_route && sparse_route && eigen < 60.0 && sparse < 30.0,
        format!("L=987 eigen route {eigen:.2} s, L=233 sparse route {sparse:.2} s"),
    )
}

/// CSV rows with the trailing wall-time column removed.
fn payload(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let wall = headers.iter().position(|h| h == "wall_time_s").unwrap();
    rdr.records()
        .map(|r| {
            r.unwrap()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != wall)
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect()
}

fn criterion_12(first: &Path, second: &Path) -> Outcome {
    let mut differing = Vec::new();
    for (name, _) in sweeps() {
        if payload(&first.join(name)) != payload(&second.join(name)) {
            differing.push(name);
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} CSV payloads byte-identical across two runs", sweeps().len())
        } else {
            format!("payloads differ: {}", differing.join(", "))
        },
    )
}

fn main() {
    let kept = std::env::var_os("QPCHAIN_ACCEPTANCE_DIR").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let root = kept.unwrap_or_else(|| tmp.path().to_path_buf());
    let (dir_a, dir_b) = (root.join("run-a"), root.join("run-b"));
    for d in [&dir_a, &dir_b] {
        // a fresh directory each time, so the second run cannot hit the cache
        let _ = std::fs::remove_dir_all(d);
    }

    let mut results: Vec<(u32, Outcome)> = vec![(1, criterion_1())];
    let first = run_all(&dir_a);
    let second = run_all(&dir_b);
    let all: Vec<&SweepRecord> = first.values().chain(second.values()).flatten().collect();

    results.push((2, criterion_2(&all)));
    results.push((3, criterion_3(&first)));
    results.push((4, criterion_4(&first)));
    results.push((5, criterion_5(&first)));
    results.push((6, criterion_6(&first)));
    results.push((7, criterion_7(&first)));
    results.push((8, criterion_8(&first)));
    results.push((9, criterion_9(&first)));
    results.push((10, criterion_10(&first)));
    results.push((11, criterion_11()));
    results.push((12, criterion_12(&dir_a, &dir_b)));

    for (id, o) in &results {
        println!(
            "criterion {id:>2}: {} — {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(id, _)| *id)
        .collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
