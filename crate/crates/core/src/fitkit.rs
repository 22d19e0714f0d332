//! Regression engines and conformity metrics shared by every law.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive smoothing applied before KL/JS so empty bins stay finite.
pub const SMOOTHING_EPS: f64 = 1e-12;

pub const R2_THRESHOLD: f64 = 0.9;
pub const KL_THRESHOLD: f64 = 0.5;
pub const JS_THRESHOLD: f64 = 0.2;
pub const MAPE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("not fittable: {0}")]
    NotFittable(String),
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("observed series is all zero")]
    AllZero,
    #[error("invalid value at index {index}: {value}")]
    InvalidValue { index: usize, value: f64 },
    #[error("x must be strictly increasing (index {0})")]
    NotIncreasing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawId {
    Zipf,
    Heaps,
    Taylor,
    Hilberg,
    Ebeling,
    Menzerath,
    Benford,
    Mandelbrot,
}

impl LawId {
    pub const ALL: [LawId; 8] = [
        LawId::Zipf,
        LawId::Heaps,
        LawId::Taylor,
        LawId::Hilberg,
        LawId::Ebeling,
        LawId::Menzerath,
        LawId::Benford,
        LawId::Mandelbrot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LawId::Zipf => "zipf",
            LawId::Heaps => "heaps",
            LawId::Taylor => "taylor",
            LawId::Hilberg => "hilberg",
            LawId::Ebeling => "ebeling",
            LawId::Menzerath => "menzerath",
            LawId::Benford => "benford",
            LawId::Mandelbrot => "mandelbrot",
        }
    }
}

impl fmt::Display for LawId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Observed (x, y) points for one law. `x` is strictly increasing and
/// positive; `y` is non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSeries {
    pub law: LawId,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EmpiricalSeries {
    pub fn new(law: LawId, x: Vec<f64>, y: Vec<f64>) -> Result<Self, FitError> {
        if x.len() != y.len() {
            return Err(FitError::LengthMismatch(x.len(), y.len()));
        }
        for (i, &v) in x.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(FitError::InvalidValue { index: i, value: v });
            }
            if i > 0 && v <= x[i - 1] {
                return Err(FitError::NotIncreasing(i));
            }
        }
        if let Some((i, &v)) = y.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(FitError::InvalidValue { index: i, value: v });
        }
        Ok(Self { law, x, y })
    }

    /// An empty series for laws whose input is too short to yield any point.
    pub fn empty(law: LawId) -> Self {
        Self {
            law,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn positive_points(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub r2: f64,
    pub kl: f64,
    pub js: f64,
    pub mape: f64,
}

impl FitMetrics {
    pub fn verdict(&self) -> ConformityVerdict {
        ConformityVerdict::from_metrics(self)
    }
}

/// Pass/fail of each metric against the customary acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformityVerdict {
    pub r2: bool,
    pub kl: bool,
    pub js: bool,
    pub mape: bool,
}

impl ConformityVerdict {
    pub fn from_metrics(m: &FitMetrics) -> Self {
        Self {
            r2: m.r2 > R2_THRESHOLD,
            kl: m.kl < KL_THRESHOLD,
            js: m.js < JS_THRESHOLD,
            mape: m.mape < MAPE_THRESHOLD,
        }
    }

    pub fn all(&self) -> bool {
        self.r2 && self.kl && self.js && self.mape
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    /// Scaling exponent (for Benford: kappa).
    pub exponent: f64,
    /// Benford's second shape parameter (omega).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_exponent: Option<f64>,
    pub prefactor: f64,
    pub fitted_y: Vec<f64>,
    pub metrics: FitMetrics,
}

/// Least-squares coefficients for `design * beta ≈ y`.
pub(crate) fn ols(design: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let beta = svd.solve(y, 1e-12).ok()?;
    beta.iter().all(|b| b.is_finite()).then_some(beta)
}

/// Slope and intercept of the simple regression of `y` on `x`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    weighted_regression(x, y, &vec![1.0; x.len()])
}

/// Weighted least-squares slope and intercept.
pub fn weighted_regression(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || x.len() != w.len() {
        return None;
    }
    let sw: f64 = w.iter().sum();
    if sw.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return None;
    }
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        sxy += wi * (xi - mx) * (yi - my);
        sxx += wi * (xi - mx) * (xi - mx);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    (slope.is_finite() && intercept.is_finite()).then_some((slope, intercept))
}

/// Share of the `ln x` axis owned by each point: half the gap to each
/// neighbour, with the end points mirrored outward. Evenly log-spaced points
/// all get the same weight.
pub fn log_spacing_weights(lx: &[f64]) -> Vec<f64> {
    let n = lx.len();
    if n < 2 {
        return vec![1.0; n];
    }
    let gaps: Vec<f64> = lx.windows(2).map(|w| w[1] - w[0]).collect();
    (0..n)
        .map(|i| match i {
            0 => gaps[0],
            _ if i == n - 1 => gaps[n - 2],
            _ => 0.5 * (gaps[i - 1] + gaps[i]),
        })
        .collect()
}

/// Power-law fit `y = C x^k` by least squares of `ln y` on `ln x`.
///
/// Each point is weighted by its share of the `ln x` axis
/// ([`log_spacing_weights`]), so densely sampled stretches such as the
/// long low-frequency tail of a rank-frequency curve do not swamp the fit.
///
/// Points with `y == 0` are excluded from the regression but still take part
/// in the metrics, so a law that only holds on part of its range is
/// penalised rather than hidden.
pub fn fit_loglog(series: &EmpiricalSeries) -> Result<LawFit, FitError> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = series
        .x
        .iter()
        .zip(&series.y)
        .filter(|(_, &y)| y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < 3 {
        return Err(FitError::NotFittable(format!(
            "{}: {} positive points, need 3",
            series.law,
            lx.len()
        )));
    }
    let (slope, intercept) = weighted_regression(&lx, &ly, &log_spacing_weights(&lx))
        .ok_or_else(|| FitError::NotFittable(format!("{}: degenerate regression", series.law)))?;
    let prefactor = intercept.exp();
    if !(prefactor.is_finite() && prefactor > 0.0) {
        return Err(FitError::NotFittable(format!(
            "{}: prefactor {prefactor} out of range",
            series.law
        )));
    }
    let fitted_y: Vec<f64> = series.x.iter().map(|&x| prefactor * x.powf(slope)).collect();
    let metrics = fit_metrics(&series.y, &fitted_y)?;
    Ok(LawFit {
        exponent: slope,
        secondary_exponent: None,
        prefactor,
        fitted_y,
        metrics,
    })
}

/// Fits `f(d) = C e^{-κ d} d^{ω-1}` to first-digit frequencies.
///
/// Zero bins are smoothed with [`SMOOTHING_EPS`] before taking logs, so any
/// input with positive total mass yields nine usable points. Metrics are
/// taken against the smoothed frequencies.
pub fn fit_benford(freqs: &[f64; 9]) -> Result<LawFit, FitError> {
    if let Some((i, &v)) = freqs.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(FitError::InvalidValue { index: i, value: v });
    }
    let total: f64 = freqs.iter().sum();
    if total <= 0.0 {
        return Err(FitError::NotFittable("benford: no digits observed".into()));
    }
    let smoothed = normalize_smoothed(freqs);
    let usable = smoothed.iter().filter(|&&v| v > 0.0).count();
    if usable < 3 {
        return Err(FitError::NotFittable(format!(
            "benford: {usable} nonzero bins, need 3"
        )));
    }
    let design = DMatrix::from_fn(9, 3, |r, c| {
        let d = (r + 1) as f64;
        match c {
            0 => 1.0,
            1 => d,
            _ => d.ln(),
        }
    });
    let y = DVector::from_iterator(9, smoothed.iter().map(|v| v.ln()));
    let beta = ols(&design, &y)
        .ok_or_else(|| FitError::NotFittable("benford: singular design".into()))?;
    let (intercept, b_d, b_ln) = (beta[0], beta[1], beta[2]);
    let kappa = -b_d;
    let omega = b_ln + 1.0;
    let prefactor = intercept.exp();
    if !(prefactor.is_finite() && prefactor > 0.0) {
        return Err(FitError::NotFittable("benford: prefactor out of range".into()));
    }
    let raw: Vec<f64> = (1..=9)
        .map(|d| {
            let d = d as f64;
            prefactor * (-kappa * d).exp() * d.powf(omega - 1.0)
        })
        .collect();
    let raw_sum: f64 = raw.iter().sum();
    let fitted_y: Vec<f64> = raw.iter().map(|v| v / raw_sum).collect();
    // metrics see the smoothed frequencies the model was fitted to, so an
    // empty bin counts as a tiny observation rather than being skipped
    let metrics = fit_metrics(&smoothed, &fitted_y)?;
    Ok(LawFit {
        exponent: kappa,
        secondary_exponent: Some(omega),
        prefactor,
        fitted_y,
        metrics,
    })
}

fn normalize_smoothed(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x + SMOOTHING_EPS).sum();
    v.iter().map(|x| (x + SMOOTHING_EPS) / total).collect()
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// R², KL, JS and MAPE of `fitted` against `observed`.
///
/// R² and MAPE use raw values (MAPE as a fraction, skipping zero
/// observations). KL and JS use smoothed, normalized copies; JS is the
/// midpoint form divided by ln 2 so it lies in [0, 1].
pub fn fit_metrics(observed: &[f64], fitted: &[f64]) -> Result<FitMetrics, FitError> {
    if observed.len() != fitted.len() {
        return Err(FitError::LengthMismatch(observed.len(), fitted.len()));
    }
    if observed.len() < 2 {
        return Err(FitError::TooShort {
            needed: 2,
            got: observed.len(),
        });
    }
    for (i, &v) in observed.iter().chain(fitted).enumerate() {
        if !(v.is_finite() && v >= 0.0) {
            return Err(FitError::InvalidValue {
                index: i % observed.len(),
                value: v,
            });
        }
    }
    if observed.iter().all(|&v| v == 0.0) {
        return Err(FitError::AllZero);
    }

    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_res: f64 = observed.iter().zip(fitted).map(|(p, q)| (p - q).powi(2)).sum();
    let ss_tot: f64 = observed.iter().map(|p| (p - mean).powi(2)).sum();
    let scale: f64 = observed.iter().map(|p| p * p).sum();
    let r2 = if ss_tot <= 1e-24 * scale {
        // constant observations: only an exact match explains them
        if ss_res <= 1e-18 * scale {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };

    let p = normalize_smoothed(observed);
    let q = normalize_smoothed(fitted);
    let kl = kl_divergence(&p, &q);
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = ((0.5 * kl_divergence(&p, &m) + 0.5 * kl_divergence(&q, &m)) / std::f64::consts::LN_2)
        .clamp(0.0, 1.0);

    let (sum, count) = observed
        .iter()
        .zip(fitted)
        .filter(|(&p, _)| p != 0.0)
        .fold((0.0, 0usize), |(s, c), (p, q)| (s + ((q - p) / p).abs(), c + 1));
    let mape = sum / count as f64;

    Ok(FitMetrics { r2, kl, js, mape })
}
