use super::CovarianceMatrix;
use crate::model::DriveSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct SiteCurrents {
    /// `J_i = -2 Im C_{i,i+1}` for each bond, positive for flow towards site L.
    pub site_currents: Vec<f64>,
    pub current: f64,
    /// `max |J_i - J|`.
    pub deviation: f64,
}

pub fn extract_currents(c: &CovarianceMatrix) -> SiteCurrents {
    let n = c.len();
    let site_currents: Vec<f64> = (0..n.saturating_sub(1))
        .map(|i| -2.0 * c.get(i, i + 1).im)
        .collect();
    let current = if site_currents.is_empty() {
        0.0
    } else {
        site_currents.iter().sum::<f64>() / site_currents.len() as f64
    };
    let deviation = site_currents
        .iter()
        .map(|j| (j - current).abs())
        .fold(0.0, f64::max);
    SiteCurrents {
        site_currents,
        current,
        deviation,
    }
}

/// Currents exchanged with the baths: `(γ(f1 - C_11), γ(fL - C_LL))`.
pub fn boundary_currents(c: &CovarianceMatrix, drive: &DriveSpec) -> (f64, f64) {
    let n = c.len();
    let g = drive.gamma();
    (
        g * (drive.f1() - c.get(0, 0).re),
        g * (drive.f_l() - c.get(n - 1, n - 1).re),
    )
}
