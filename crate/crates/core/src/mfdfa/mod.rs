//! Multifractal detrended fluctuation analysis of a document's scalar
//! series, and the resulting conformity fit of `F_q(s) ∝ s^h(q)`.
//!
//! The pipeline is: units (sentences, or words for short texts) → vectors
//! from an [`EmbeddingProvider`] → per-unit component mean → profile →
//! bidirectional windowed detrending → `F_q(s)` → `h(q)`, `τ(q)`, `(α, f(α))`.

pub mod embed;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{sentence_spans, tokenize_text, Document};
use crate::fitkit::{fit_loglog, linear_regression, EmpiricalSeries, FitError, LawFit, LawId};
use crate::laws::LawReport;
pub use embed::{EmbedError, EmbeddingProvider, FallbackEmbedder, FileEmbeddings, TextUnit, UnitKind};

pub const MIN_SERIES_LEN: usize = 64;
pub const MIN_SCALE: usize = 16;
pub const DEFAULT_SCALE_COUNT: usize = 12;
/// Floor applied to a window's detrended variance when it is numerically zero.
pub const VARIANCE_FLOOR: f64 = 1e-30;
/// Fractal dimension of the support of a one-dimensional series.
pub const SUPPORT_DIMENSION: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MfdfaError {
    #[error("not fittable: {0}")]
    NotFittable(String),
    #[error("embedding unit {index} of \"{doc_id}\": {source}")]
    Provider {
        doc_id: String,
        index: usize,
        #[source]
        source: EmbedError,
    },
    #[error("embedding dimension {got} at unit {index} differs from {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("scale {scale} outside [{min}, {max}]")]
    InvalidScale { scale: usize, min: usize, max: usize },
    #[error("detrending order {0} outside 1..=3")]
    InvalidOrder(usize),
    #[error("q value {0} is not finite")]
    InvalidQ(f64),
    #[error("q = {0} not in grid")]
    MissingQ(f64),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    pub values: Vec<f64>,
    pub provider: String,
    pub unit: UnitKind,
}

impl ScalarSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaConfig {
    pub detrend_order: usize,
    pub q_grid: Vec<f64>,
    pub scale_count: usize,
    pub q_ref: f64,
}

impl Default for MfdfaConfig {
    fn default() -> Self {
        Self {
            detrend_order: 1,
            q_grid: default_q_grid(),
            scale_count: DEFAULT_SCALE_COUNT,
            q_ref: 2.0,
        }
    }
}

/// −10 to 10 in steps of 0.5.
pub fn default_q_grid() -> Vec<f64> {
    (-20..=20).map(|i| i as f64 * 0.5).collect()
}

/// Up to `count` log-spaced integer scales in `[16, n/4]`, deduplicated.
pub fn default_scales(n: usize, count: usize) -> Vec<usize> {
    let hi = n / 4;
    if hi < MIN_SCALE || count == 0 {
        return Vec::new();
    }
    if count == 1 || hi == MIN_SCALE {
        return vec![MIN_SCALE];
    }
    let (lo_ln, hi_ln) = ((MIN_SCALE as f64).ln(), (hi as f64).ln());
    let mut scales: Vec<usize> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            ((lo_ln + t * (hi_ln - lo_ln)).exp().round() as usize).clamp(MIN_SCALE, hi)
        })
        .collect();
    scales.dedup();
    scales
}

fn embed_units(
    units: &[TextUnit<'_>],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<f64>, MfdfaError> {
    let embed_one = |u: &TextUnit<'_>| {
        provider.embed(u).map_err(|source| MfdfaError::Provider {
            doc_id: u.doc_id.to_string(),
            index: u.index,
            source,
        })
    };
    let vectors: Vec<Vec<f64>> = if provider.concurrency_safe() {
        units.par_iter().map(embed_one).collect::<Result<_, _>>()?
    } else {
        units.iter().map(embed_one).collect::<Result<_, _>>()?
    };
    let Some(expected) = vectors.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    vectors
        .iter()
        .enumerate()
        .map(|(index, v)| {
            if v.len() != expected || v.is_empty() {
                return Err(MfdfaError::DimensionMismatch {
                    index,
                    expected,
                    got: v.len(),
                });
            }
            Ok(v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

/// Scalar series for one document.
pub fn build_series(doc: &Document, provider: &dyn EmbeddingProvider) -> Result<ScalarSeries, MfdfaError> {
    build_series_multi(std::slice::from_ref(doc), provider)
}

/// Scalar series over the concatenation of several documents.
///
/// Units are sentences. When fewer than 64 sentences exist but at least 64
/// words do, units fall back to words. A shorter series is still returned;
/// the analysis stage rejects it.
pub fn build_series_multi(
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
) -> Result<ScalarSeries, MfdfaError> {
    let sentences: Vec<TextUnit<'_>> = docs
        .iter()
        .flat_map(|d| {
            sentence_spans(&d.text)
                .into_iter()
                .enumerate()
                .map(move |(index, text)| TextUnit {
                    doc_id: &d.id,
                    index,
                    text,
                    kind: UnitKind::Sentence,
                })
        })
        .collect();
    if sentences.is_empty() {
        return Err(MfdfaError::NotFittable("no sentences".into()));
    }
    if sentences.len() >= MIN_SERIES_LEN {
        return Ok(ScalarSeries {
            values: embed_units(&sentences, provider)?,
            provider: provider.id().to_string(),
            unit: UnitKind::Sentence,
        });
    }
    let words: Vec<(usize, Vec<String>)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (i, tokenize_text(&d.text).words))
        .collect();
    let total_words: usize = words.iter().map(|(_, w)| w.len()).sum();
    if total_words < MIN_SERIES_LEN {
        return Ok(ScalarSeries {
            values: embed_units(&sentences, provider)?,
            provider: provider.id().to_string(),
            unit: UnitKind::Sentence,
        });
    }
    let units: Vec<TextUnit<'_>> = words
        .iter()
        .flat_map(|(i, ws)| {
            let doc_id = docs[*i].id.as_str();
            ws.iter().enumerate().map(move |(index, w)| TextUnit {
                doc_id,
                index,
                text: w,
                kind: UnitKind::Word,
            })
        })
        .collect();
    Ok(ScalarSeries {
        values: embed_units(&units, provider)?,
        provider: provider.id().to_string(),
        unit: UnitKind::Word,
    })
}

/// Cumulative sum of mean-removed values, each taken at the midpoint of its
/// step (`Y_k = y_0 + … + y_{k-1} + y_k / 2`), so the result has `n` points.
/// Reversing the input then mirrors and negates the profile exactly.
pub fn profile(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values
        .iter()
        .scan(0.0, |acc, v| {
            let y = v - mean;
            let mid = *acc + 0.5 * y;
            *acc += y;
            Some(mid)
        })
        .collect()
}

/// Orthonormal polynomial basis (degrees 0..=order) on the grid 0..len.
fn poly_basis(len: usize, order: usize) -> Vec<Vec<f64>> {
    let centre = (len as f64 - 1.0) / 2.0;
    let t: Vec<f64> = (0..len).map(|k| (k as f64 - centre) / len as f64).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for deg in 0..=order {
        let mut v: Vec<f64> = t.iter().map(|x| x.powi(deg as i32)).collect();
        // two Gram–Schmidt passes keep the basis orthogonal to machine precision
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

/// Mean squared residual after removing the least-squares polynomial.
/// Returns 0 when the residual is zero relative to the window's magnitude.
fn detrended_variance(window: &[f64], basis: &[Vec<f64>], residual: &mut [f64]) -> f64 {
    residual.copy_from_slice(window);
    for b in basis {
        let dot: f64 = residual.iter().zip(b).map(|(a, c)| a * c).sum();
        residual.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
    }
    let n = window.len() as f64;
    let var = residual.iter().map(|r| r * r).sum::<f64>() / n;
    let scale = window.iter().map(|w| w * w).sum::<f64>() / n;
    if var <= 1e-24 * scale {
        0.0
    } else {
        var
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationGrid {
    pub scales: Vec<usize>,
    pub q_grid: Vec<f64>,
    /// `values[qi][si]` is `F_q(s)` for `q_grid[qi]` and `scales[si]`.
    pub values: Vec<Vec<f64>>,
    pub detrend_order: usize,
    /// Windows whose variance was floored at [`VARIANCE_FLOOR`].
    pub floored_windows: usize,
}

impl FluctuationGrid {
    pub fn floored(&self) -> bool {
        self.floored_windows > 0
    }

    pub fn q_index(&self, q: f64) -> Option<usize> {
        self.q_grid.iter().position(|&x| (x - q).abs() < 1e-9)
    }

    pub fn column(&self, q: f64) -> Option<&[f64]> {
        self.q_index(q).map(|i| self.values[i].as_slice())
    }
}

/// Generalized fluctuation function over `2·⌊n/s⌋` windows per scale
/// (taken from both ends of the profile).
pub fn fluctuation(
    profile: &[f64],
    scales: &[usize],
    q_grid: &[f64],
    detrend_order: usize,
) -> Result<FluctuationGrid, MfdfaError> {
    let n = profile.len();
    let max = n / 4;
    if !(1..=3).contains(&detrend_order) {
        return Err(MfdfaError::InvalidOrder(detrend_order));
    }
    if let Some(&scale) = scales.iter().find(|&&s| s < MIN_SCALE || s > max) {
        return Err(MfdfaError::InvalidScale {
            scale,
            min: MIN_SCALE,
            max,
        });
    }
    if let Some(&q) = q_grid.iter().find(|q| !q.is_finite()) {
        return Err(MfdfaError::InvalidQ(q));
    }

    // ln F²(v, s) for every window, per scale
    let per_scale: Vec<(Vec<f64>, usize)> = scales
        .par_iter()
        .map(|&s| {
            let basis = poly_basis(s, detrend_order);
            let windows = n / s;
            let mut residual = vec![0.0; s];
            let mut floored = 0;
            let mut logs = Vec::with_capacity(2 * windows);
            let starts = (0..windows).map(|v| v * s).chain((0..windows).map(|v| n - (v + 1) * s));
            for start in starts {
                let mut f2 = detrended_variance(&profile[start..start + s], &basis, &mut residual);
                if f2 < VARIANCE_FLOOR {
                    f2 = VARIANCE_FLOOR;
                    floored += 1;
                }
                logs.push(f2.ln());
            }
            (logs, floored)
        })
        .collect();

    let values = q_grid
        .iter()
        .map(|&q| {
            per_scale
                .iter()
                .map(|(logs, _)| {
                    let count = logs.len() as f64;
                    if q == 0.0 {
                        (0.5 * logs.iter().sum::<f64>() / count).exp()
                    } else {
                        // log-sum-exp keeps large |q| from overflowing
                        let a: Vec<f64> = logs.iter().map(|l| 0.5 * q * l).collect();
                        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let lse = m + a.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                        ((lse - count.ln()) / q).exp()
                    }
                })
                .collect()
        })
        .collect();

    Ok(FluctuationGrid {
        scales: scales.to_vec(),
        q_grid: q_grid.to_vec(),
        values,
        detrend_order,
        floored_windows: per_scale.iter().map(|(_, f)| f).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultifractalSpectrum {
    pub q_grid: Vec<f64>,
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub delta_alpha: f64,
    pub scales: Vec<usize>,
    /// `fluctuation[qi][si]`, restricted to the surviving q values.
    pub fluctuation: Vec<Vec<f64>>,
}

impl MultifractalSpectrum {
    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q_grid.iter().position(|&x| (x - q).abs() < 1e-9).map(|i| self.h[i])
    }
}

/// Generalized Hurst exponents and the derived mass and singularity spectra.
pub fn spectrum(grid: &FluctuationGrid) -> Result<MultifractalSpectrum, MfdfaError> {
    if grid.scales.len() < 3 {
        return Err(MfdfaError::NotFittable(format!(
            "{} scales, need 3",
            grid.scales.len()
        )));
    }
    let ln_s: Vec<f64> = grid.scales.iter().map(|&s| (s as f64).ln()).collect();
    let mut q_grid = Vec::new();
    let mut h = Vec::new();
    let mut fluct = Vec::new();
    for (qi, &q) in grid.q_grid.iter().enumerate() {
        let ln_f: Vec<f64> = grid.values[qi].iter().map(|f| f.ln()).collect();
        if ln_f.iter().any(|v| !v.is_finite()) {
            continue;
        }
        match linear_regression(&ln_s, &ln_f) {
            Some((slope, _)) if slope.is_finite() => {
                q_grid.push(q);
                h.push(slope);
                fluct.push(grid.values[qi].clone());
            }
            _ => {}
        }
    }
    if q_grid.len() < 3 {
        return Err(MfdfaError::NotFittable(format!(
            "{} usable q values, need 3",
            q_grid.len()
        )));
    }
    let k = q_grid.len();
    let dh: Vec<f64> = (0..k)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(k - 1));
            (h[b] - h[a]) / (q_grid[b] - q_grid[a])
        })
        .collect();
    let tau: Vec<f64> = q_grid.iter().zip(&h).map(|(q, h)| q * h - SUPPORT_DIMENSION).collect();
    let alpha: Vec<f64> = (0..k).map(|i| h[i] + q_grid[i] * dh[i]).collect();
    let f_alpha: Vec<f64> = (0..k).map(|i| q_grid[i] * (alpha[i] - h[i]) + 1.0).collect();
    let (lo, hi) = alpha
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    Ok(MultifractalSpectrum {
        q_grid,
        h,
        tau,
        alpha,
        f_alpha,
        delta_alpha: hi - lo,
        scales: grid.scales.clone(),
        fluctuation: fluct,
    })
}

/// Power-law fit of `F_{q_ref}(s)` against `s`.
pub fn mandelbrot_series(grid: &FluctuationGrid, q_ref: f64) -> Result<EmpiricalSeries, MfdfaError> {
    let column = grid.column(q_ref).ok_or(MfdfaError::MissingQ(q_ref))?;
    let x = grid.scales.iter().map(|&s| s as f64).collect();
    Ok(EmpiricalSeries::new(LawId::Mandelbrot, x, column.to_vec())?)
}

pub fn mandelbrot_conformity(grid: &FluctuationGrid, q_ref: f64) -> Result<LawFit, MfdfaError> {
    Ok(fit_loglog(&mandelbrot_series(grid, q_ref)?)?)
}

/// Complete multifractal analysis of a scalar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultifractalAnalysis {
    pub series_len: usize,
    pub unit: UnitKind,
    pub provider: String,
    pub grid: FluctuationGrid,
    pub spectrum: MultifractalSpectrum,
    pub mandelbrot: LawFit,
}

pub fn analyze_series(series: &ScalarSeries, cfg: &MfdfaConfig) -> Result<MultifractalAnalysis, MfdfaError> {
    if series.len() < MIN_SERIES_LEN {
        return Err(MfdfaError::NotFittable(format!(
            "series length {} below {MIN_SERIES_LEN}",
            series.len()
        )));
    }
    let prof = profile(&series.values);
    let scales = default_scales(prof.len(), cfg.scale_count);
    let grid = fluctuation(&prof, &scales, &cfg.q_grid, cfg.detrend_order)?;
    let spectrum = spectrum(&grid)?;
    let mandelbrot = mandelbrot_conformity(&grid, cfg.q_ref)?;
    Ok(MultifractalAnalysis {
        series_len: series.len(),
        unit: series.unit,
        provider: series.provider.clone(),
        grid,
        spectrum,
        mandelbrot,
    })
}

pub fn analyze_documents(
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
    cfg: &MfdfaConfig,
) -> Result<MultifractalAnalysis, MfdfaError> {
    analyze_series(&build_series_multi(docs, provider)?, cfg)
}

/// The Mandelbrot row of a law table. Provider failures are reported as
/// errors; too-short or degenerate series become an unfittable report.
pub fn mandelbrot_report(
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
    cfg: &MfdfaConfig,
) -> Result<(LawReport, Option<MultifractalAnalysis>), MfdfaError> {
    let analysis = match analyze_documents(docs, provider, cfg) {
        Ok(a) => a,
        Err(e @ (MfdfaError::Provider { .. } | MfdfaError::DimensionMismatch { .. })) => return Err(e),
        Err(e) => return Ok((LawReport::unfittable(LawId::Mandelbrot, e.to_string()), None)),
    };
    let series = mandelbrot_series(&analysis.grid, cfg.q_ref)?;
    let report = LawReport::from_result(series, Ok(analysis.mandelbrot.clone()));
    Ok((report, Some(analysis)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct ConstProvider(Vec<f64>);

    impl EmbeddingProvider for ConstProvider {
        fn id(&self) -> &str {
            "const"
        }
        fn embed(&self, _: &TextUnit<'_>) -> Result<Vec<f64>, EmbedError> {
            Ok(self.0.clone())
        }
    }

    struct FailingProvider;

    impl EmbeddingProvider for FailingProvider {
        fn id(&self) -> &str {
            "fail"
        }
        fn embed(&self, u: &TextUnit<'_>) -> Result<Vec<f64>, EmbedError> {
            if u.index == 2 {
                Err(EmbedError::Provider("boom".into()))
            } else {
                Ok(vec![1.0])
            }
        }
    }

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
    }

    #[test]
    fn profile_hand_values() {
        assert_eq!(profile(&[1.0, 2.0, 3.0]), [-0.5, -1.0, -0.5]);
        assert!(profile(&[4.0; 10]).iter().all(|&v| v == 0.0));
        let v = white_noise(1000, 3);
        let p = profile(&v);
        assert_eq!(p.len(), 1000);
        let mean = v.iter().sum::<f64>() / 1000.0;
        assert_abs_diff_eq!(*p.last().unwrap(), -0.5 * (v[999] - mean), epsilon = 1e-9);
    }

    #[test]
    fn constant_provider_series() {
        let doc = Document::new("d", "One. Two two. Three three three.");
        let s = build_series(&doc, &ConstProvider(vec![1.0, 2.0, 6.0])).unwrap();
        assert_eq!(s.values, [3.0, 3.0, 3.0]);
        assert_eq!(s.unit, UnitKind::Sentence);
    }

    #[test]
    fn falls_back_to_words() {
        let text = (0..70).map(|i| format!("w{}", "x".repeat(i % 5 + 1))).collect::<Vec<_>>().join(" ");
        let s = build_series(&Document::new("d", text + "."), &FallbackEmbedder).unwrap();
        assert_eq!(s.unit, UnitKind::Word);
        assert_eq!(s.len(), 70);
    }

    #[test]
    fn provider_failure_names_unit() {
        let doc = Document::new("d", "a. b. c. d.");
        let err = build_series(&doc, &FailingProvider).unwrap_err();
        assert!(matches!(err, MfdfaError::Provider { index: 2, .. }));
        assert!(build_series(&Document::new("e", "..."), &FallbackEmbedder).is_err());
    }

    #[test]
    fn scale_grid() {
        let s = default_scales(100_000, 12);
        assert_eq!(s.len(), 12);
        assert_eq!((s[0], *s.last().unwrap()), (16, 25_000));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(default_scales(64, 12), [16]);
        assert!(default_scales(63, 12).is_empty());
        assert_eq!(default_q_grid().len(), 41);
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = profile(&white_noise(256, 1));
        assert!(matches!(fluctuation(&p, &[8], &[2.0], 1), Err(MfdfaError::InvalidScale { .. })));
        assert!(matches!(fluctuation(&p, &[65], &[2.0], 1), Err(MfdfaError::InvalidScale { .. })));
        assert!(matches!(fluctuation(&p, &[16], &[2.0], 4), Err(MfdfaError::InvalidOrder(4))));
        assert!(matches!(fluctuation(&p, &[16], &[f64::NAN], 1), Err(MfdfaError::InvalidQ(_))));
    }

    #[test]
    fn linear_profile_is_floored() {
        let p: Vec<f64> = (0..256).map(|i| 3.0 * i as f64 - 7.0).collect();
        let g = fluctuation(&p, &[16, 32, 64], &[-2.0, 0.0, 2.0], 1).unwrap();
        assert!(g.floored());
        assert_eq!(g.floored_windows, 2 * (16 + 8 + 4));
        assert!(g.values.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn quadratic_detrending_absorbs_parabola() {
        let p: Vec<f64> = (0..128).map(|i| (i as f64).powi(2) * 0.01).collect();
        assert!(fluctuation(&p, &[16, 32], &[2.0], 2).unwrap().floored());
        assert!(!fluctuation(&p, &[16, 32], &[2.0], 1).unwrap().floored());
    }

    #[test]
    fn q_monotonic_generalized_mean() {
        let p = profile(&white_noise(4096, 9));
        let scales = default_scales(p.len(), 12);
        let g = fluctuation(&p, &scales, &default_q_grid(), 1).unwrap();
        for si in 0..scales.len() {
            for qi in 1..g.q_grid.len() {
                assert!(g.values[qi][si] >= g.values[qi - 1][si] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn white_noise_hurst_half() {
        let series = ScalarSeries { values: white_noise(20_000, 11), provider: "t".into(), unit: UnitKind::Word };
        let a = analyze_series(&series, &MfdfaConfig::default()).unwrap();
        assert!((a.mandelbrot.exponent - 0.5).abs() < 0.07, "h2 = {}", a.mandelbrot.exponent);
        let s = &a.spectrum;
        for i in 0..s.q_grid.len() {
            assert_abs_diff_eq!(s.tau[i], s.q_grid[i] * s.h[i] - 1.0, epsilon = 0.0);
        }
        assert!(s.tau.windows(2).all(|w| w[1] >= w[0]));
        let zero = s.q_grid.iter().position(|&q| q == 0.0).unwrap();
        assert!(s.f_alpha[zero] <= 1.0 + 1e-6);
        assert_abs_diff_eq!(s.delta_alpha, s.alpha.iter().cloned().fold(f64::MIN, f64::max)
            - s.alpha.iter().cloned().fold(f64::MAX, f64::min), epsilon = 1e-15);
    }

    #[test]
    fn exact_power_law_column_fits_perfectly() {
        let grid = FluctuationGrid {
            scales: vec![16, 32, 64, 128],
            q_grid: vec![1.0, 2.0, 3.0],
            values: vec![vec![1.0; 4], [16.0f64, 32.0, 64.0, 128.0].iter().map(|s| 0.3 * s.powf(0.8)).collect(), vec![2.0; 4]],
            detrend_order: 1,
            floored_windows: 0,
        };
        let fit = mandelbrot_conformity(&grid, 2.0).unwrap();
        assert_abs_diff_eq!(fit.metrics.r2, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.exponent, 0.8, epsilon = 1e-12);
        assert!(matches!(mandelbrot_conformity(&grid, 0.5), Err(MfdfaError::MissingQ(_))));
    }

    #[test]
    fn spectrum_drops_degenerate_q() {
        let grid = FluctuationGrid {
            scales: vec![16, 32, 64],
            q_grid: vec![-1.0, 1.0, 2.0, 3.0],
            values: vec![vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 4.0]],
            detrend_order: 1,
            floored_windows: 0,
        };
        let s = spectrum(&grid).unwrap();
        assert_eq!(s.q_grid, [1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(s.h[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn short_text_report_is_unfittable() {
        let (report, analysis) =
            mandelbrot_report(&[Document::new("d", "Too short.")], &FallbackEmbedder, &MfdfaConfig::default()).unwrap();
        assert!(!report.fittable && analysis.is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn profile_translation_invariant(seed in 0u64..1000, c in -100.0f64..100.0) {
                let v = white_noise(300, seed);
                let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
                for (a, b) in profile(&v).iter().zip(profile(&shifted)) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }

            #[test]
            fn reversal_symmetry(seed in 0u64..1000, len in 256usize..1200) {
                let v = white_noise(len, seed);
                let rev: Vec<f64> = v.iter().rev().cloned().collect();
                let q = default_q_grid();
                let pa = profile(&v);
                let scales = default_scales(pa.len(), 8);
                let a = fluctuation(&pa, &scales, &q, 1).unwrap();
                let b = fluctuation(&profile(&rev), &scales, &q, 1).unwrap();
                for (ra, rb) in a.values.iter().zip(&b.values) {
                    for (x, y) in ra.iter().zip(rb) {
                        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                    }
                }
            }
        }
    }
}
