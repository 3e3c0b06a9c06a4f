//! Parameter sweeps over `(λ, Γ, L)` with phase averaging, caching and
//! deterministic output.

mod cache;
mod io;

use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::conductivity;
use crate::model::{ChainSpec, DriveSpec, ModelError, ModelKind};
use crate::ness::{solve_ness, SolverOptions};

pub use cache::{cache_key, PointKey};
pub use io::{journal_path, sidecar_path, write_outputs, write_records_csv, CSV_COLUMNS};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THETA_GRID_CONVENTION: &str = "theta_k = k*pi/N_theta, k = 0..N_theta-1";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("no Fibonacci numbers in [{min}, {max}]")]
    EmptyRange { min: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Fibonacci numbers `2, 3, 5, 8, ...` within `[min, max]`.
pub fn fibonacci_sizes(min: usize, max: usize) -> Result<Vec<usize>, SweepError> {
    let (mut a, mut b) = (1usize, 2usize);
    let mut out = Vec::new();
    while b <= max {
        if b >= min {
            out.push(b);
        }
        (a, b) = (b, a + b);
    }
    if min < 2 || out.is_empty() {
        return Err(SweepError::EmptyRange { min, max });
    }
    Ok(out)
}

/// `θ_k = kπ/N`, `k = 0..N-1`.
pub fn theta_grid(samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|k| k as f64 * std::f64::consts::PI / samples as f64)
        .collect()
}

fn default_theta_samples() -> usize {
    100
}

fn default_true() -> bool {
    true
}

/// Bath parameters shared by every point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathConfig {
    pub gamma: f64,
    pub f1: f64,
    #[serde(rename = "fL")]
    pub f_l: f64,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig {
            gamma: 1.0,
            f1: 1.0,
            f_l: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub lambdas: Vec<f64>,
    /// Dephasing grid `Γ`; may contain 0.
    #[serde(rename = "Gammas")]
    pub dephasings: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Phase samples for AAH; ignored (treated as 1) for phase-free models.
    #[serde(default = "default_theta_samples")]
    pub theta_samples: usize,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    /// CSV output; without it the sweep is purely in-memory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Reuse completed points from the journal next to `output`.
    #[serde(default = "default_true")]
    pub cache: bool,
    /// Print one line per completed point to stderr.
    #[serde(default)]
    pub progress: bool,
}

impl SweepConfig {
    pub fn new(model: ModelKind, lambdas: Vec<f64>, dephasings: Vec<f64>, sizes: Vec<usize>) -> Self {
        SweepConfig {
            model,
            lambdas,
            dephasings,
            sizes,
            theta_samples: default_theta_samples(),
            bath: BathConfig::default(),
            solver: SolverOptions::default(),
            output: None,
            threads: None,
            cache: true,
            progress: false,
        }
    }

    pub fn with_theta_samples(mut self, n: usize) -> Self {
        self.theta_samples = n;
        self
    }

    pub fn with_output(mut self, path: impl Into<PathBuf>) -> Self {
        self.output = Some(path.into());
        self
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::InvalidConfig(m.to_string()));
        if self.lambdas.is_empty() || self.dephasings.is_empty() || self.sizes.is_empty() {
            return bad("lambda, Gamma and size grids must be non-empty");
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sizes must be strictly ascending");
        }
        if self.theta_samples == 0 {
            return bad("theta_samples must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        if self.bath.f1 == self.bath.f_l {
            return bad("f1 and fL must differ for the conductivity to be defined");
        }
        // surface parameter errors before any work starts
        for &l in &self.sizes {
            for &lam in &self.lambdas {
                ChainSpec::new(l, lam, self.model.with_phase(0.0))?;
            }
        }
        for &g in &self.dephasings {
            DriveSpec::new(self.bath.gamma, self.bath.f1, self.bath.f_l, g)?;
        }
        Ok(())
    }

    /// Effective number of phase samples.
    pub fn phases(&self) -> usize {
        if self.model.is_phase_dependent() {
            self.theta_samples
        } else {
            1
        }
    }

    /// Grid points in `(λ, Γ, L)` order.
    pub fn points(&self) -> Vec<PointKey> {
        let mut lambdas = self.lambdas.clone();
        let mut gammas = self.dephasings.clone();
        lambdas.sort_by(f64::total_cmp);
        gammas.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for &lambda in &lambdas {
            for &dephasing in &gammas {
                for &length in &self.sizes {
                    out.push(PointKey {
                        model: self.model,
                        lambda,
                        dephasing,
                        length,
                        gamma: self.bath.gamma,
                        f1: self.bath.f1,
                        f_l: self.bath.f_l,
                        theta_samples: self.phases(),
                    });
                }
            }
        }
        out
    }
}

/// One θ-averaged grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub cache_key: String,
    pub model: String,
    pub lambda: f64,
    #[serde(rename = "Gamma")]
    pub dephasing: f64,
    #[serde(rename = "L")]
    pub length: usize,
    pub gamma: f64,
    pub f1: f64,
    #[serde(rename = "fL")]
    pub f_l: f64,
    pub theta_samples: usize,
    /// θ-averaged current.
    #[serde(rename = "J")]
    pub current: f64,
    /// Standard error of the mean over θ (0 for a single sample).
    #[serde(rename = "J_stderr")]
    pub current_stderr: f64,
    pub kappa: f64,
    /// Largest steady-state residual over θ.
    pub residual: f64,
    pub solver_method: String,
    pub error: Option<String>,
    pub wall_time_s: f64,
    /// Largest `max|J_i - J| / |J|` over θ, including boundary currents.
    pub max_relative_inhomogeneity: f64,
    pub artifact_version: String,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Solves one grid point, averaging over the phase grid. Solver failures are
/// recorded in the `error` field.
pub fn solve_point(point: &PointKey, solver: &SolverOptions) -> SweepRecord {
    let start = Instant::now();
    let thetas = theta_grid(point.theta_samples);
    let mut currents = Vec::with_capacity(thetas.len());
    let mut residual: f64 = 0.0;
    let mut inhomogeneity: f64 = 0.0;
    let mut methods: Vec<&'static str> = Vec::new();
    let mut error = None;

    for &theta in &thetas {
        let outcome = ChainSpec::new(point.length, point.lambda, point.model.with_phase(theta))
            .map_err(|e| e.to_string())
            .and_then(|spec| {
                let drive = DriveSpec::new(point.gamma, point.f1, point.f_l, point.dephasing)
                    .map_err(|e| e.to_string())?;
                solve_ness(&spec, &drive, solver).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(sol) => {
                currents.push(sol.current);
                residual = residual.max(sol.residual);
                inhomogeneity = inhomogeneity.max(sol.relative_inhomogeneity());
                let name = sol.route.name();
                if !methods.contains(&name) {
                    methods.push(name);
                }
            }
            Err(e) => {
                error = Some(format!("theta={theta}: {e}"));
                break;
            }
        }
    }

    let (current, current_stderr) = if error.is_some() {
        (f64::NAN, f64::NAN)
    } else {
        mean_and_stderr(&currents)
    };
    methods.sort_unstable();
    let kappa = conductivity(current, point.length, point.f1 - point.f_l).unwrap_or(f64::NAN);
    SweepRecord {
        cache_key: cache::default_key(point, solver),
        model: point.model.name().to_string(),
        lambda: point.lambda,
        dephasing: point.dephasing,
        length: point.length,
        gamma: point.gamma,
        f1: point.f1,
        f_l: point.f_l,
        theta_samples: point.theta_samples,
        current,
        current_stderr,
        kappa,
        residual: if error.is_some() { f64::NAN } else { residual },
        solver_method: methods.join("+"),
        error,
        wall_time_s: start.elapsed().as_secs_f64(),
        max_relative_inhomogeneity: inhomogeneity,
        artifact_version: ARTIFACT_VERSION.to_string(),
    }
}

/// Mean and standard error of the mean (sample standard deviation / √N).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every grid point, in parallel across points, and returns the records
/// sorted by `(λ, Γ, L)`. With an output path, completed points are journaled
/// as they finish, cached points are reused, and the final CSV and JSON
/// sidecar are written at the end.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>, SweepError> {
    config.validate()?;
    let points = config.points();

    let journal = config.output.as_deref().map(io::journal_path);
    let cached = match (&journal, config.cache) {
        (Some(j), true) => cache::load_journal(j)?,
        _ => Default::default(),
    };

    let mut done: Vec<SweepRecord> = Vec::with_capacity(points.len());
    let mut todo = Vec::new();
    for p in points {
        let key = cache::default_key(&p, &config.solver);
        match cached.get(&key) {
            Some(r) => done.push(r.clone()),
            None => todo.push(p),
        }
    }

    let mut writer = match &journal {
        Some(j) => {
            if let Some(dir) = j.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            if !config.cache && j.exists() {
                std::fs::remove_file(j)?;
            }
            Some(cache::JournalWriter::open(j)?)
        }
        None => None,
    };

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = config.threads {
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| SweepError::InvalidConfig(format!("thread pool: {e}")))?
    };

    let total = todo.len();
    let (tx, rx) = mpsc::channel::<SweepRecord>();
    let solver = config.solver;
    let io_result: Result<(), SweepError> = std::thread::scope(|s| {
        let workers = s.spawn(|| {
            pool.install(|| {
                todo.par_iter().for_each_with(tx, |tx, p| {
                    // the receiver only disappears after an I/O failure
                    let _ = tx.send(solve_point(p, &solver));
                })
            })
        });
        // single writer: journal appends happen on this thread only
        let mut finished = 0;
        let mut first_err = None;
        for rec in rx {
            finished += 1;
            if config.progress {
                eprintln!(
                    "[{finished}/{total}] {} lambda={} Gamma={} L={} J={:e}{}",
                    rec.model,
                    rec.lambda,
                    rec.dephasing,
                    rec.length,
                    rec.current,
                    rec.error
                        .as_deref()
                        .map(|e| format!(" error: {e}"))
                        .unwrap_or_default()
                );
            }
            if first_err.is_none() {
                if let Some(w) = writer.as_mut() {
                    if let Err(e) = w.append(&rec) {
                        first_err = Some(e);
                    }
                }
            }
            done.push(rec);
        }
        workers.join().expect("sweep worker panicked");
        first_err.map_or(Ok(()), Err)
    });
    io_result?;

    done.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.dephasing.total_cmp(&b.dephasing))
            .then(a.length.cmp(&b.length))
    });
    if let Some(path) = &config.output {
        io::write_outputs(path, config, &done)?;
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_size_ranges() {
        assert_eq!(fibonacci_sizes(34, 233).unwrap(), vec![34, 55, 89, 144, 233]);
        assert_eq!(fibonacci_sizes(900, 1000).unwrap(), vec![987]);
        assert_eq!(*fibonacci_sizes(2, 1597).unwrap().last().unwrap(), 1597);
        assert_eq!(fibonacci_sizes(2, 1597).unwrap()[..4], [2, 3, 5, 8]);
        assert!(matches!(
            fibonacci_sizes(40, 50),
            Err(SweepError::EmptyRange { .. })
        ));
        assert!(matches!(
            fibonacci_sizes(10, 5),
            Err(SweepError::EmptyRange { .. })
        ));
    }

    #[test]
    fn theta_grid_is_half_open() {
        let g = theta_grid(4);
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], 0.0);
        assert!((g[3] - 0.75 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn stderr_of_single_sample_is_zero() {
        assert_eq!(mean_and_stderr(&[2.5]), (2.5, 0.0));
        let (m, s) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn record_count_and_order() {
        let cfg = SweepConfig::new(
            ModelKind::Fibonacci,
            vec![1.0, 0.5],
            vec![0.1, 0.0],
            vec![5, 8, 13],
        );
        let recs = run_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 12);
        assert!(recs.iter().all(SweepRecord::is_ok));
        assert_eq!((recs[0].lambda, recs[0].dephasing, recs[0].length), (0.5, 0.0, 5));
        assert_eq!(recs[0].theta_samples, 1);
        assert_eq!(recs[0].current_stderr, 0.0);
        assert_eq!(recs[11].length, 13);
    }

    #[test]
    fn invalid_configs() {
        let ok = SweepConfig::new(ModelKind::Clean, vec![0.0], vec![0.0], vec![5, 8]);
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.sizes = vec![8, 5];
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.lambdas.clear();
        assert!(c.validate().is_err());
        let c = ok.clone().with_theta_samples(0);
        assert!(c.validate().is_err());
        let mut c = ok;
        c.sizes = vec![1, 5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg =
            SweepConfig::new(ModelKind::Aah, vec![1.0], vec![0.0, 0.01], vec![34, 55]).with_theta_samples(20);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SweepConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let minimal: SweepConfig =
            serde_json::from_str(r#"{"model":"aah","lambdas":[0.5],"Gammas":[0],"sizes":[34]}"#).unwrap();
        assert_eq!(minimal.theta_samples, 100);
        assert_eq!(minimal.bath, BathConfig::default());
    }
}
