//! Content-addressed cache of completed sweep points.
//!
//! Completed records are appended to a journal CSV as they finish. A rerun of
//! the same configuration reads the journal and skips every point whose key
//! is already present.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{SweepError, SweepRecord, ARTIFACT_VERSION};
use crate::model::ModelKind;
use crate::ness::SolverOptions;

/// Everything that determines a record's numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointKey {
    pub model: ModelKind,
    pub lambda: f64,
    pub dephasing: f64,
    pub length: usize,
    pub gamma: f64,
    pub f1: f64,
    pub f_l: f64,
    pub theta_samples: usize,
}

/// Hex SHA-256 of a canonical rendering of the point, the solver settings and
/// the artifact version. Floats enter by bit pattern, so keys are exact and
/// platform-independent.
pub fn cache_key(point: &PointKey, solver: &SolverOptions, version: &str) -> String {
    let canonical = format!(
        "qpchain-point/1|version={version}|model={}|lambda={:016x}|Gamma={:016x}|L={}|gamma={:016x}|f1={:016x}|fL={:016x}|theta={}|tol={:016x}|method={:?}|precision={:?}|hermitize={}",
        point.model.name(),
        point.lambda.to_bits(),
        point.dephasing.to_bits(),
        point.length,
        point.gamma.to_bits(),
        point.f1.to_bits(),
        point.f_l.to_bits(),
        point.theta_samples,
        solver.residual_tolerance.to_bits(),
        solver.method,
        solver.precision,
        solver.hermitize,
    );
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub(crate) fn default_key(point: &PointKey, solver: &SolverOptions) -> String {
    cache_key(point, solver, ARTIFACT_VERSION)
}

/// Records already in the journal, by cache key. A missing journal is empty.
pub(crate) fn load_journal(path: &Path) -> Result<HashMap<String, SweepRecord>, SweepError> {
    let mut out = HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    for row in rdr.deserialize::<SweepRecord>() {
        // a torn final line from an interrupted run is dropped
        match row {
            Ok(r) => {
                out.insert(r.cache_key.clone(), r);
            }
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => continue,
        }
    }
    Ok(out)
}

pub(crate) struct JournalWriter {
    inner: csv::Writer<File>,
}

impl JournalWriter {
    pub fn open(path: &Path) -> Result<Self, SweepError> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let inner = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(JournalWriter { inner })
    }

    pub fn append(&mut self, rec: &SweepRecord) -> Result<(), SweepError> {
        self.inner.serialize(rec)?;
        self.inner.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point() -> PointKey {
        PointKey {
            model: ModelKind::Aah,
            lambda: 1.0,
            dephasing: 0.0,
            length: 89,
            gamma: 1.0,
            f1: 1.0,
            f_l: 0.0,
            theta_samples: 20,
        }
    }

    #[test]
    fn keys_are_stable_and_discriminating() {
        let s = SolverOptions::default();
        let a = cache_key(&point(), &s, "1.0");
        assert_eq!(a, cache_key(&point(), &s, "1.0"));
        assert_eq!(a.len(), 64);
        let mut p = point();
        p.dephasing = 0.1;
        assert_ne!(a, cache_key(&p, &s, "1.0"));
        assert_ne!(a, cache_key(&point(), &s, "1.1"));
        let tighter = SolverOptions {
            residual_tolerance: 1e-10,
            ..s
        };
        assert_ne!(a, cache_key(&point(), &tighter, "1.0"));
    }
}
