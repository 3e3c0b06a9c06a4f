//! Final CSV table and JSON metadata sidecar.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{SweepConfig, SweepError, SweepRecord, ARTIFACT_VERSION, THETA_GRID_CONVENTION};

/// One row of the published table; column order is part of the format.
#[derive(Serialize)]
struct Row<'a> {
    model: &'a str,
    lambda: f64,
    #[serde(rename = "Gamma")]
    dephasing: f64,
    #[serde(rename = "L")]
    length: usize,
    gamma: f64,
    f1: f64,
    #[serde(rename = "fL")]
    f_l: f64,
    theta_samples: usize,
    #[serde(rename = "J")]
    current: f64,
    #[serde(rename = "J_stderr")]
    current_stderr: f64,
    kappa: f64,
    residual: f64,
    solver_method: &'a str,
    error: &'a str,
    wall_time_s: f64,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "model",
    "lambda",
    "Gamma",
    "L",
    "gamma",
    "f1",
    "fL",
    "theta_samples",
    "J",
    "J_stderr",
    "kappa",
    "residual",
    "solver_method",
    "error",
    "wall_time_s",
];

pub fn write_records_csv<W: std::io::Write>(out: W, records: &[SweepRecord]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(Row {
            model: &r.model,
            lambda: r.lambda,
            dephasing: r.dephasing,
            length: r.length,
            gamma: r.gamma,
            f1: r.f1,
            f_l: r.f_l,
            theta_samples: r.theta_samples,
            current: r.current,
            current_stderr: r.current_stderr,
            kappa: r.kappa,
            residual: r.residual,
            solver_method: &r.solver_method,
            error: r.error.as_deref().unwrap_or(""),
            wall_time_s: r.wall_time_s,
        })?;
    }
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    artifact_version: &'a str,
    created_unix_s: u64,
    theta_grid: &'a str,
    sizes: &'a [usize],
    records: usize,
    failed: usize,
    config: &'a SweepConfig,
}

/// Sidecar path: the output path with a `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Journal (cache) path kept next to the output.
pub fn journal_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_stem().unwrap_or_default().to_os_string();
    name.push(".journal.csv");
    csv_path.with_file_name(name)
}

pub fn write_outputs(path: &Path, config: &SweepConfig, records: &[SweepRecord]) -> Result<(), SweepError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    // write-then-rename so a crash never leaves a truncated table
    let tmp = path.with_extension("csv.tmp");
    write_records_csv(std::fs::File::create(&tmp)?, records)?;
    std::fs::rename(&tmp, path)?;

    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = Sidecar {
        artifact_version: ARTIFACT_VERSION,
        created_unix_s: created,
        theta_grid: THETA_GRID_CONVENTION,
        sizes: &config.sizes,
        records: records.len(),
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        config,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
