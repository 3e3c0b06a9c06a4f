//! Finite-size scaling fits, conductivity and transport classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("fit needs at least 3 points, window selected {0}")]
    InsufficientPoints(usize),
    #[error("non-positive value {value} at abscissa {at}; logarithmic fits need positive data")]
    NonPositiveCurrent { at: f64, value: f64 },
    #[error("abscissae must be positive and strictly increasing")]
    UnorderedAbscissae,
    #[error("zero bias: conductivity is undefined")]
    ZeroBias,
}

/// A series `(x, y)`: either `(L, J)` or `(Γ, κ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub points: Vec<(f64, f64)>,
    /// Free-form provenance of the data (parameters, θ averaging, ...).
    #[serde(default)]
    pub label: String,
}

impl ScalingSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, AnalysisError> {
        if points.iter().any(|p| !(p.0 > 0.0)) || points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(AnalysisError::UnorderedAbscissae);
        }
        Ok(ScalingSeries {
            points,
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn from_sizes(sizes: &[usize], currents: &[f64]) -> Result<Self, AnalysisError> {
        assert_eq!(sizes.len(), currents.len());
        Self::new(
            sizes
                .iter()
                .map(|&l| l as f64)
                .zip(currents.iter().copied())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn select(&self, window: &FitWindow) -> Vec<(f64, f64)> {
        match *window {
            FitWindow::All => self.points.clone(),
            FitWindow::LastN(n) => self.points[self.points.len().saturating_sub(n)..].to_vec(),
            FitWindow::Range { min, max } => self
                .points
                .iter()
                .copied()
                .filter(|p| p.0 >= min * (1.0 - 1e-12) && p.0 <= max * (1.0 + 1e-12))
                .collect(),
        }
    }
}

/// Which points of a series enter a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum FitWindow {
    All,
    LastN(usize),
    /// Abscissae in `[min, max]`.
    Range {
        min: f64,
        max: f64,
    },
}

impl FitWindow {
    /// All points in the localized phase, the last five otherwise.
    pub fn for_phase(localized: bool) -> Self {
        if localized {
            FitWindow::All
        } else {
            FitWindow::LastN(5)
        }
    }

    /// Default small-Γ window for the β fit.
    pub const SMALL_GAMMA: FitWindow = FitWindow::Range { min: 1e-3, max: 1e-2 };
}

impl std::fmt::Display for FitWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWindow::All => write!(f, "all points"),
            FitWindow::LastN(n) => write!(f, "last {n} points"),
            FitWindow::Range { min, max } => write!(f, "x in [{min:e}, {max:e}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `ν`, `β` or the decay rate, depending on the fit.
    pub exponent: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub window: String,
    /// Abscissae actually used.
    pub used: Vec<f64>,
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, stderr(b), r²)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = if n > 2.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, stderr, r2)
}

fn fit(
    series: &ScalingSeries,
    window: &FitWindow,
    log_x: bool,
    sign: f64,
) -> Result<FitResult, AnalysisError> {
    let pts = series.select(window);
    if pts.len() < 3 {
        return Err(AnalysisError::InsufficientPoints(pts.len()));
    }
    if let Some(&(at, value)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(AnalysisError::NonPositiveCurrent { at, value });
    }
    let x: Vec<f64> = pts.iter().map(|p| if log_x { p.0.ln() } else { p.0 }).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, stderr, r_squared) = ols(&x, &y);
    Ok(FitResult {
        exponent: sign * slope,
        intercept,
        stderr,
        r_squared,
        window: window.to_string(),
        used: pts.iter().map(|p| p.0).collect(),
    })
}

/// `log J = -ν log L + C`; returns `ν`.
pub fn fit_transport_exponent(
    series: &ScalingSeries,
    window: &FitWindow,
) -> Result<FitResult, AnalysisError> {
    fit(series, window, true, -1.0)
}

/// `log J = -L/ξ + C` over all points; returns the decay rate `1/ξ`.
pub fn fit_localization_decay(series: &ScalingSeries) -> Result<FitResult, AnalysisError> {
    fit(series, &FitWindow::All, false, -1.0)
}

/// `log κ = β log Γ + C`; returns `β`.
pub fn fit_small_gamma_beta(series: &ScalingSeries, window: &FitWindow) -> Result<FitResult, AnalysisError> {
    fit(series, window, true, 1.0)
}

/// `κ = J L / Δf`, with `Δf = f1 - fL` so that κ > 0 for forward flow.
pub fn conductivity(current: f64, length: usize, delta_f: f64) -> Result<f64, AnalysisError> {
    if delta_f == 0.0 {
        return Err(AnalysisError::ZeroBias);
    }
    Ok(current * length as f64 / delta_f)
}

/// `L_Γ = Γ^{-1/(1+ν)}`, prefactor fixed to 1.
pub fn dephasing_length(gamma: f64, nu: f64) -> f64 {
    gamma.powf(-1.0 / (1.0 + nu))
}

/// `L^{1-ν}` below `L_Γ`, frozen at `L_Γ^{1-ν}` above.
pub fn piecewise_kappa_model(length: usize, gamma: f64, nu: f64) -> f64 {
    let lg = dephasing_length(gamma, nu);
    (length as f64).min(lg).powf(1.0 - nu)
}

/// Small-Γ exponent implied by continuity at `L_Γ`: `β = (ν-1)/(ν+1)`.
pub fn predicted_beta(nu: f64) -> f64 {
    (nu - 1.0) / (nu + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportRegime {
    Ballistic,
    Superdiffusive,
    Diffusive,
    Subdiffusive,
    Insulating,
    /// `ν` between the bands (e.g. `0.9 ≤ ν < 1.0` outside the diffusive band), or negative.
    Unclassified,
}

impl std::fmt::Display for TransportRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TransportRegime::Ballistic => "ballistic",
            TransportRegime::Superdiffusive => "superdiffusive",
            TransportRegime::Diffusive => "diffusive",
            TransportRegime::Subdiffusive => "subdiffusive",
            TransportRegime::Insulating => "insulating",
            TransportRegime::Unclassified => "unclassified",
        };
        f.write_str(s)
    }
}

/// Decision thresholds; defaults give 0.1-wide bands around ν = 0 and ν = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationThresholds {
    pub ballistic_band: f64,
    pub diffusive_band: f64,
    /// Exponential-fit r² must beat the power-law r² by this much ...
    pub insulating_r2_margin: f64,
    /// ... and the power-law ν must exceed this.
    pub insulating_min_nu: f64,
}

impl Default for ClassificationThresholds {
    fn default() -> Self {
        ClassificationThresholds {
            ballistic_band: 0.1,
            diffusive_band: 0.1,
            insulating_r2_margin: 0.02,
            insulating_min_nu: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportClass {
    pub regime: TransportRegime,
    pub nu: f64,
    pub thresholds: ClassificationThresholds,
}

pub fn classify_transport(power: &FitResult, exponential: &FitResult) -> TransportClass {
    classify_with(power, exponential, ClassificationThresholds::default())
}

pub fn classify_with(
    power: &FitResult,
    exponential: &FitResult,
    t: ClassificationThresholds,
) -> TransportClass {
    let nu = power.exponent;
    let regime =
        if exponential.r_squared - power.r_squared >= t.insulating_r2_margin && nu > t.insulating_min_nu {
            TransportRegime::Insulating
        } else if nu.abs() < t.ballistic_band {
            TransportRegime::Ballistic
        } else if (nu - 1.0).abs() <= t.diffusive_band {
            TransportRegime::Diffusive
        } else if nu > 1.0 + t.diffusive_band {
            TransportRegime::Subdiffusive
        } else if nu >= t.ballistic_band && nu < 1.0 - t.diffusive_band {
            TransportRegime::Superdiffusive
        } else {
            TransportRegime::Unclassified
        };
    TransportClass {
        regime,
        nu,
        thresholds: t,
    }
}
