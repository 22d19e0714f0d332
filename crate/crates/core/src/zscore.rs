//! Fuzzy grading of fit metrics and Z-number suitability inference.
//!
//! Each law's four metrics are graded into a badness vector `A_i` with
//! spread `B_i`; the laws are pooled into `(A_t, B_t)`, which a Mamdani
//! rule base maps to a non-suitability set whose centroid gives `s`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitkit::FitMetrics;

/// Weights of (R², KL, JS, MAPE) when pooling a law's badness vector.
pub const METRIC_WEIGHTS: [f64; 4] = [0.1, 0.2, 0.2, 0.5];
/// Points in the output universe used for centroid integration.
pub const CENTROID_GRID: usize = 1001;
/// Upper end of the `B_t` universe; larger values are clamped.
pub const B_MAX: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ZError {
    #[error("metric {kind:?} has invalid value {value}")]
    InvalidMetric { kind: MetricKind, value: f64 },
    #[error("no fittable law to aggregate")]
    NoSignal,
}

/// Triangular membership function with feet `a`, `c` and apex `b`.
/// A degenerate edge (`a == b` or `b == c`) has membership 1 at that edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriMF {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TriMF {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn membership(&self, x: f64) -> f64 {
        let Self { a, b, c } = *self;
        let mut m: f64 = 0.0;
        if a == b {
            if x == a {
                m = 1.0;
            }
        } else if (a..=b).contains(&x) {
            m = (x - a) / (b - a);
        }
        if b == c {
            if x == b {
                m = 1.0;
            }
        } else if (b..=c).contains(&x) {
            m = m.max((c - x) / (c - b));
        }
        m
    }
}

/// Low/Medium/High sets over one universe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyPartition {
    pub low: TriMF,
    pub medium: TriMF,
    pub high: TriMF,
}

impl FuzzyPartition {
    pub fn memberships(&self, x: f64) -> [f64; 3] {
        [self.low.membership(x), self.medium.membership(x), self.high.membership(x)]
    }

    fn sets(&self) -> [TriMF; 3] {
        [self.low, self.medium, self.high]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    R2,
    Kl,
    Js,
    Mape,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::R2, MetricKind::Kl, MetricKind::Js, MetricKind::Mape];

    /// Breakpoints of the graded quantity (`1 − R²` for R²).
    pub fn partition(self) -> FuzzyPartition {
        match self {
            MetricKind::R2 | MetricKind::Js => FuzzyPartition {
                low: TriMF::new(0.0, 0.05, 0.1),
                medium: TriMF::new(0.1, 0.15, 0.2),
                high: TriMF::new(0.2, 0.6, 1.0),
            },
            MetricKind::Kl | MetricKind::Mape => FuzzyPartition {
                low: TriMF::new(0.0, 0.1, 0.2),
                medium: TriMF::new(0.2, 0.35, 0.5),
                high: TriMF::new(0.5, 0.75, 1.0),
            },
        }
    }

    /// The quantity that is graded: larger means a worse fit.
    pub fn graded_value(self, value: f64) -> f64 {
        match self {
            MetricKind::R2 => 1.0 - value.clamp(0.0, 1.0),
            _ => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricGrade {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
    /// Defuzzified badness in [0, 1]; 0 for a perfect metric.
    pub badness: f64,
    /// Set when the value sat on a gap between sets and badness was
    /// interpolated between the neighbouring apexes.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub interpolated: bool,
}

/// Grades one metric. Low has a shoulder below its apex and High above
/// its apex, so every value from 0 upwards is covered except the exact
/// feet shared by two sets.
pub fn grade_metric(kind: MetricKind, value: f64) -> Result<MetricGrade, ZError> {
    if !value.is_finite() || value < 0.0 {
        return Err(ZError::InvalidMetric { kind, value });
    }
    let x = kind.graded_value(value);
    let p = kind.partition();
    let low = if x <= p.low.b { 1.0 } else { p.low.membership(x) };
    let medium = p.medium.membership(x);
    let high = if x >= p.high.b { 1.0 } else { p.high.membership(x) };
    let apexes = [p.low.b, p.medium.b, p.high.b];
    let rescale = |rep: f64| ((rep - apexes[0]) / (apexes[2] - apexes[0])).clamp(0.0, 1.0);

    let total = low + medium + high;
    if total > 0.0 {
        let rep = (low * apexes[0] + medium * apexes[1] + high * apexes[2]) / total;
        return Ok(MetricGrade { low, medium, high, badness: rescale(rep), interpolated: false });
    }
    // a shared foot: the representative value moves linearly between apexes,
    // which places it at x itself
    Ok(MetricGrade {
        low,
        medium,
        high,
        badness: rescale(x),
        interpolated: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawVector {
    /// Badness of (R², KL, JS, MAPE).
    pub a: [f64; 4],
    /// Population standard deviation of `a`.
    pub b: f64,
}

impl LawVector {
    pub fn from_badness(a: [f64; 4]) -> Self {
        let mean = a.iter().sum::<f64>() / 4.0;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        Self { a, b: var.sqrt() }
    }

    pub fn weighted(&self) -> f64 {
        self.a.iter().zip(METRIC_WEIGHTS).map(|(a, w)| a * w).sum::<f64>().abs()
    }
}

pub fn law_vector(metrics: &FitMetrics) -> Result<LawVector, ZError> {
    let values = [metrics.r2, metrics.kl, metrics.js, metrics.mape];
    let mut a = [0.0; 4];
    for (slot, (kind, value)) in a.iter_mut().zip(MetricKind::ALL.into_iter().zip(values)) {
        *slot = grade_metric(kind, value)?.badness;
    }
    Ok(LawVector::from_badness(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZNumber {
    pub a_t: f64,
    pub b_t: f64,
    pub laws_used: usize,
}

/// Pools the law vectors of fittable laws. Summation runs over the
/// vectors sorted by value so the result does not depend on input order.
pub fn aggregate(vectors: &[LawVector]) -> Result<ZNumber, ZError> {
    if vectors.is_empty() {
        return Err(ZError::NoSignal);
    }
    let n = vectors.len() as f64;
    let mut weighted: Vec<f64> = vectors.iter().map(LawVector::weighted).collect();
    let mut spreads: Vec<f64> = vectors.iter().map(|v| v.b).collect();
    weighted.sort_by(f64::total_cmp);
    spreads.sort_by(f64::total_cmp);
    Ok(ZNumber {
        a_t: (weighted.iter().sum::<f64>() / n).clamp(0.0, 1.0),
        b_t: spreads.iter().sum::<f64>() / n,
        laws_used: vectors.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    Medium,
    High,
}

impl Level {
    fn index(self) -> usize {
        self as usize
    }
}

/// `if A_t is a and B_t is any of b then S' is each of then`.
/// The disjunction over `b` is a bounded sum, so listing every B level is
/// a tautology on a partition of unity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub a: Level,
    pub b: Vec<Level>,
    pub then: Vec<Level>,
}

impl Rule {
    fn new(a: Level, b: &[Level], then: &[Level]) -> Self {
        Self { a, b: b.to_vec(), then: then.to_vec() }
    }
}

/// Input and output sets plus rules of the suitability inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    pub a_sets: FuzzyPartition,
    pub b_sets: FuzzyPartition,
    pub s_sets: FuzzyPartition,
    pub b_max: f64,
    pub rules: Vec<Rule>,
}

impl Default for RuleBase {
    fn default() -> Self {
        use Level::*;
        Self {
            a_sets: FuzzyPartition {
                low: TriMF::new(0.0, 0.0, 0.3),
                medium: TriMF::new(0.2, 0.5, 0.8),
                high: TriMF::new(0.7, 1.0, 1.0),
            },
            // Ruspini partition: memberships sum to 1 across [0, B_MAX]
            b_sets: FuzzyPartition {
                low: TriMF::new(0.0, 0.0, 0.15),
                medium: TriMF::new(0.0, 0.15, 0.5),
                high: TriMF::new(0.15, 0.5, 0.5),
            },
            s_sets: FuzzyPartition {
                low: TriMF::new(0.0, 0.0, 0.35),
                medium: TriMF::new(0.25, 0.5, 0.75),
                high: TriMF::new(0.65, 1.0, 1.0),
            },
            b_max: B_MAX,
            rules: vec![
                Rule::new(High, &[Low, Medium, High], &[High]),
                Rule::new(Medium, &[Low, Medium], &[Medium]),
                Rule::new(Medium, &[High], &[Medium]),
                Rule::new(Low, &[High], &[Low, Medium]),
                Rule::new(Low, &[Low, Medium], &[Low]),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suitability {
    pub s: f64,
    pub s_prime_centroid: f64,
}

impl RuleBase {
    /// Aggregated output membership over the `S'` grid.
    pub fn output_membership(&self, z: &ZNumber) -> Vec<f64> {
        let a = self.a_sets.memberships(z.a_t.clamp(0.0, 1.0));
        let b = self.b_sets.memberships(z.b_t.clamp(0.0, self.b_max));
        let s_sets = self.s_sets.sets();
        let mut agg = vec![0.0f64; CENTROID_GRID];
        for rule in &self.rules {
            let b_deg = rule.b.iter().map(|l| b[l.index()]).sum::<f64>().min(1.0);
            let strength = a[rule.a.index()].min(b_deg);
            if strength <= 0.0 {
                continue;
            }
            for out in &rule.then {
                let set = s_sets[out.index()];
                for (i, m) in agg.iter_mut().enumerate() {
                    *m = m.max(strength.min(set.membership(grid_point(i))));
                }
            }
        }
        agg
    }

    pub fn infer(&self, z: &ZNumber) -> Suitability {
        let agg = self.output_membership(z);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..CENTROID_GRID {
            let (x0, x1) = (grid_point(i - 1), grid_point(i));
            let h = x1 - x0;
            num += 0.5 * h * (x0 * agg[i - 1] + x1 * agg[i]);
            den += 0.5 * h * (agg[i - 1] + agg[i]);
        }
        // every (A_t, B_t) fires some rule, so den > 0; guard anyway
        let centroid = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 1.0 };
        Suitability {
            s: 1.0 - centroid,
            s_prime_centroid: centroid,
        }
    }
}

fn grid_point(i: usize) -> f64 {
    i as f64 / (CENTROID_GRID - 1) as f64
}

pub fn infer_suitability(z: &ZNumber) -> Suitability {
    RuleBase::default().infer(z)
}
