use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use qpchain::model::{fibonacci_potential, fibonacci_word};
use qpchain::oracle::{build_liouvillian, covariance_from_density, steady_state_dense, MAX_ORACLE_LENGTH};
use qpchain::sweep::write_records_csv;
use qpchain::{
    classify_transport, conductivity, extract_currents, fit_localization_decay, fit_small_gamma_beta,
    fit_transport_exponent, run_sweep, solve_ness, ChainSpec, DriveSpec, FitResult, FitWindow, ModelKind,
    PotentialKind, ScalingSeries, SolveRoute, SolverError, SolverOptions, SweepConfig, TransportRegime,
};
use serde::Deserialize;
use serde_json::json;

use crate::{
    Abscissa, DriveArgs, Failure, FitArgs, ModelArgs, OracleArgs, Outcome, PotentialArgs, SolveArgs,
    SweepArgs,
};

pub(crate) fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn phase(kind: ModelKind, theta: Option<f64>) -> Result<PotentialKind, Failure> {
    match theta {
        Some(_) if !kind.is_phase_dependent() => {
            Err(usage(format!("--theta does not apply to --kind {kind}")))
        }
        Some(t) if !t.is_finite() => Err(usage("--theta must be finite")),
        t => Ok(kind.with_phase(t.unwrap_or(0.0))),
    }
}

fn chain(m: &ModelArgs) -> Result<ChainSpec, Failure> {
    ChainSpec::new(m.length, m.lambda, phase(m.kind, m.theta)?).map_err(|e| usage(e.to_string()))
}

fn drive(d: &DriveArgs) -> Result<DriveSpec, Failure> {
    DriveSpec::new(d.gamma, d.f1, d.f_l, d.dephasing).map_err(|e| usage(e.to_string()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn potential(a: PotentialArgs) -> Outcome {
    let spec = chain(&a.model)?;
    if a.check_word {
        if a.model.kind != ModelKind::Fibonacci {
            return Err(usage("--check-word needs --kind fibonacci"));
        }
        let l = spec.length();
        let word = (0..).map(fibonacci_word).find(|w| w.len() >= l).unwrap();
        if let Some(i) = (1..=l).find(|&i| fibonacci_potential(i) != word[i - 1]) {
            return Err(Failure::Threshold(format!(
                "closed form and recursion differ at site {i}"
            )));
        }
    }
    let mut table = String::from("i,V\n");
    for (i, v) in spec.onsite_energies().iter().enumerate() {
        table.push_str(&format!("{},{}\n", i + 1, v));
    }
    match &a.out {
        Some(path) => fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?,
        None if a.check_word => {}
        None => std::io::stdout().write_all(table.as_bytes())?,
    }
    if a.check_word {
        println!("OK");
    }
    Ok(())
}

pub(crate) fn solve(a: SolveArgs) -> Outcome {
    let spec = chain(&a.model)?;
    let drive = drive(&a.drive)?;
    let opts = a.solver.options();
    let start = std::time::Instant::now();
    let sol = solve_ness(&spec, &drive, &opts).map_err(|e| match e {
        SolverError::InvalidOptions(m) => usage(m),
        e => Failure::Solver(e.to_string()),
    })?;
    let kappa = conductivity(sol.current, spec.length(), drive.bias()).ok();
    let bits = match sol.route {
        SolveRoute::LyapunovExtended { bits } => Some(bits),
        _ => None,
    };
    let mut summary = json!({
        "model": a.model.kind.name(),
        "lambda": spec.lambda(),
        "theta": a.model.theta,
        "L": spec.length(),
        "gamma": drive.gamma(),
        "f1": drive.f1(),
        "fL": drive.f_l(),
        "Gamma": drive.dephasing(),
        "J": sol.current,
        "kappa": kappa,
        "boundary_in": sol.boundary_in,
        "boundary_out": sol.boundary_out,
        "relative_inhomogeneity": sol.relative_inhomogeneity(),
        "residual": sol.residual,
        "solver_method": sol.route.name(),
        "precision_bits": bits,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let mut density = String::from("i,n\n");
        for (i, n) in sol.density.iter().enumerate() {
            density.push_str(&format!("{},{:e}\n", i + 1, n));
        }
        fs::write(dir.join("density.csv"), density)?;
        summary["density_profile"] = json!(dir.join("density.csv"));
        if a.dump_covariance {
            let c = sol.covariance.as_mat();
            let mut out = String::from("i,j,re,im\n");
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    out.push_str(&format!(
                        "{},{},{:e},{:e}\n",
                        i + 1,
                        j + 1,
                        c[(i, j)].re,
                        c[(i, j)].im
                    ));
                }
            }
            fs::write(dir.join("covariance.csv"), out)?;
            summary["covariance"] = json!(dir.join("covariance.csv"));
        }
        write_json(&dir.join("summary.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub(crate) fn load_sweep_config(path: &Path) -> Result<SweepConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub(crate) fn set_tolerance(solver: &mut SolverOptions, tolerance: Option<f64>) -> Result<(), Failure> {
    if let Some(t) = tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(usage("--tolerance must be positive"));
        }
        solver.residual_tolerance = t;
    }
    Ok(())
}

pub(crate) fn sweep(a: SweepArgs) -> Outcome {
    let mut cfg = load_sweep_config(&a.config)?;
    if a.out.is_some() {
        cfg.output = a.out;
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    set_tolerance(&mut cfg.solver, a.tolerance)?;
    cfg.cache &= !a.no_cache;
    cfg.progress |= a.progress;
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let records = run_sweep(&cfg)?;
    if cfg.output.is_none() {
        write_records_csv(std::io::stdout().lock(), &records)?;
    }
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    eprintln!(
        "{} records{}{}",
        records.len(),
        cfg.output
            .as_ref()
            .map(|p| format!(" written to {}", p.display()))
            .unwrap_or_default(),
        if failed > 0 {
            format!(", {failed} failed")
        } else {
            String::new()
        }
    );
    if failed > 0 {
        return Err(Failure::Solver(format!(
            "{failed} of {} points failed; see the error column",
            records.len()
        )));
    }
    Ok(())
}

/// The subset of sweep CSV columns the fits need.
#[derive(Deserialize)]
struct Row {
    lambda: f64,
    #[serde(rename = "Gamma")]
    dephasing: f64,
    #[serde(rename = "L")]
    length: usize,
    #[serde(rename = "J")]
    current: f64,
    kappa: f64,
    error: String,
}

fn parse_window(s: &str) -> Result<FitWindow, Failure> {
    let bad = || {
        usage(format!(
            "unrecognized --window '{s}'; use all, last:N or range:MIN:MAX"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["all"] => Ok(FitWindow::All),
        ["last", n] => n
            .parse()
            .ok()
            .filter(|&n| n >= 3)
            .map(FitWindow::LastN)
            .ok_or_else(bad),
        ["range", lo, hi] => match (lo.parse::<f64>(), hi.parse::<f64>()) {
            (Ok(min), Ok(max)) if min < max => Ok(FitWindow::Range { min, max }),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub(crate) fn fit(a: FitArgs) -> Outcome {
    let window = a.window.as_deref().map(parse_window).transpose()?;
    let mut rdr =
        csv::Reader::from_path(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows: Vec<Row> = rdr.deserialize().collect::<Result<_, _>>()?;
    let rows: Vec<Row> = rows
        .into_iter()
        .filter(|r| a.lambda.is_none_or(|l| r.lambda == l))
        .filter(|r| a.dephasing.is_none_or(|g| r.dephasing == g))
        .filter(|r| a.length.is_none_or(|l| r.length == l))
        .collect();
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    let rows: Vec<Row> = rows.into_iter().filter(|r| r.error.is_empty()).collect();

    let lambdas = distinct(rows.iter().map(|r| r.lambda));
    if lambdas.len() > 1 {
        return Err(usage(format!(
            "input holds several λ values {lambdas:?}; select one with --lambda"
        )));
    }
    let report = match a.against {
        Abscissa::Length => {
            let gammas = distinct(rows.iter().map(|r| r.dephasing));
            if gammas.len() > 1 {
                return Err(usage(format!(
                    "input holds several Γ values {gammas:?}; select one with --Gamma"
                )));
            }
            let series = ScalingSeries::new(rows.iter().map(|r| (r.length as f64, r.current)).collect())
                .map_err(|e| usage(e.to_string()))?;
            let all = fit_transport_exponent(&series, &FitWindow::All).map_err(|e| usage(e.to_string()))?;
            let decay = fit_localization_decay(&series).map_err(|e| usage(e.to_string()))?;
            let class = classify_transport(&all, &decay);
            let window = window.unwrap_or(FitWindow::for_phase(class.regime == TransportRegime::Insulating));
            let power = fit_transport_exponent(&series, &window).map_err(|e| usage(e.to_string()))?;
            fit_report(
                "nu",
                power,
                json!({ "decay": decay, "regime": class.regime.to_string(), "classification": class }),
            )
        }
        Abscissa::Dephasing => {
            let sizes = distinct(rows.iter().map(|r| r.length as f64));
            if sizes.len() > 1 {
                return Err(usage(format!(
                    "input holds several sizes {sizes:?}; select one with --L"
                )));
            }
            let series = ScalingSeries::new(rows.iter().map(|r| (r.dephasing, r.kappa)).collect())
                .map_err(|e| usage(e.to_string()))?;
            let window = window.unwrap_or(FitWindow::SMALL_GAMMA);
            let beta = fit_small_gamma_beta(&series, &window).map_err(|e| usage(e.to_string()))?;
            fit_report("beta", beta, json!({}))
        }
    };
    let (exponent, mut report) = report;
    report["skipped_failed_rows"] = json!(failed);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(min) = a.expect_min.filter(|&m| !(exponent >= m)) {
        return Err(Failure::Threshold(format!("exponent {exponent} below {min}")));
    }
    if let Some(max) = a.expect_max.filter(|&m| !(exponent <= m)) {
        return Err(Failure::Threshold(format!("exponent {exponent} above {max}")));
    }
    Ok(())
}

fn fit_report(name: &str, fit: FitResult, mut extra: serde_json::Value) -> (f64, serde_json::Value) {
    extra[name] = json!(fit.exponent);
    extra["fit"] = json!(fit);
    (fit.exponent, extra)
}

/// Built-in grid for `oracle-check --grid`.
fn oracle_grid(d: &DriveSpec) -> Vec<(ChainSpec, DriveSpec)> {
    let mut cases = Vec::new();
    for length in 2..=5 {
        for kind in [
            PotentialKind::Clean,
            PotentialKind::aah(0.7),
            PotentialKind::Fibonacci,
        ] {
            for lambda in [0.3, 1.7] {
                for dephasing in [0.0, 0.1, 1.0] {
                    let spec = ChainSpec::new(length, lambda, kind).unwrap();
                    cases.push((spec, d.with_dephasing(dephasing).unwrap()));
                }
            }
        }
    }
    cases
}

pub(crate) fn oracle_check(a: OracleArgs) -> Outcome {
    let base = drive(&a.drive)?;
    let cases = if a.grid {
        oracle_grid(&base)
    } else {
        let length = a.length.expect("clap enforces --L without --grid");
        if length > MAX_ORACLE_LENGTH {
            return Err(usage(format!(
                "--L {length} exceeds the oracle limit of {MAX_ORACLE_LENGTH}"
            )));
        }
        let spec =
            ChainSpec::new(length, a.lambda, phase(a.kind, a.theta)?).map_err(|e| usage(e.to_string()))?;
        vec![(spec, base)]
    };

    let mut worst_c: f64 = 0.0;
    let mut worst_j: f64 = 0.0;
    for (spec, drive) in &cases {
        let gen = build_liouvillian(spec, drive).map_err(|e| usage(e.to_string()))?;
        let rho = steady_state_dense(&gen).map_err(|e| Failure::Solver(e.to_string()))?;
        let exact = covariance_from_density(&rho);
        let exact_j = extract_currents(&exact);
        let sol =
            solve_ness(spec, drive, &SolverOptions::default()).map_err(|e| Failure::Solver(e.to_string()))?;
        let dc = sol.covariance.max_abs_diff(&exact);
        let dj = sol
            .site_currents
            .iter()
            .zip(&exact_j.site_currents)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst_c = worst_c.max(dc);
        worst_j = worst_j.max(dj);
        if !a.grid {
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "L": spec.length(),
                    "J_solver": sol.current,
                    "J_oracle": exact_j.current,
                    "max_abs_diff_C": dc,
                    "max_abs_diff_J": dj,
                    "oracle_residual": gen.apply_residual(&rho),
                    "oracle_min_eigenvalue": rho.min_eigenvalue(),
                }))?
            );
        }
    }
    if a.grid {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "cases": cases.len(),
                "max_abs_diff_C": worst_c,
                "max_abs_diff_J": worst_j,
            }))?
        );
    }
    if !(worst_c <= a.max_diff && worst_j <= a.max_diff) {
        return Err(Failure::Threshold(format!(
            "deviation {:.3e} exceeds {:.1e}",
            worst_c.max(worst_j),
            a.max_diff
        )));
    }
    Ok(())
}
