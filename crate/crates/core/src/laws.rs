//! Empirical series for the seven non-fractal laws and their fits.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{first_digits, TokenStream};
use crate::fitkit::{fit_benford, fit_loglog, EmpiricalSeries, FitError, LawFit, LawId};

/// Number of Heaps checkpoints aimed for along the token stream.
pub const HEAPS_CHECKPOINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawParams {
    pub taylor_segment_len: usize,
    pub hilberg_max_block: usize,
}

impl Default for LawParams {
    fn default() -> Self {
        Self {
            taylor_segment_len: 100,
            hilberg_max_block: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub law: LawId,
    pub series: EmpiricalSeries,
    pub fit: Option<LawFit>,
    pub fittable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl LawReport {
    pub fn from_result(series: EmpiricalSeries, result: Result<LawFit, FitError>) -> Self {
        let law = series.law;
        match result {
            Ok(fit) => Self {
                law,
                series,
                fit: Some(fit),
                fittable: true,
                reason: None,
            },
            Err(e) => Self {
                law,
                series,
                fit: None,
                fittable: false,
                reason: Some(e.to_string()),
            },
        }
    }

    pub fn unfittable(law: LawId, reason: impl Into<String>) -> Self {
        Self {
            law,
            series: EmpiricalSeries::empty(law),
            fit: None,
            fittable: false,
            reason: Some(reason.into()),
        }
    }
}

fn series(law: LawId, x: Vec<f64>, y: Vec<f64>) -> EmpiricalSeries {
    EmpiricalSeries::new(law, x, y).expect("builders emit increasing positive x")
}

/// Rank-frequency points; ties in frequency keep first-occurrence order.
pub fn zipf_series(ts: &TokenStream) -> EmpiricalSeries {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, w) in ts.words.iter().enumerate() {
        counts.entry(w.as_str()).or_insert((0, pos)).0 += 1;
    }
    let mut freq: Vec<(usize, usize)> = counts.into_values().collect();
    freq.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let x = (1..=freq.len()).map(|r| r as f64).collect();
    let y = freq.iter().map(|&(c, _)| c as f64).collect();
    series(LawId::Zipf, x, y)
}

/// Vocabulary size after every ⌈N/200⌉-th token, plus the final token.
pub fn heaps_series(ts: &TokenStream) -> EmpiricalSeries {
    let n = ts.words.len();
    let stride = n.div_ceil(HEAPS_CHECKPOINTS).max(1);
    let mut seen = std::collections::HashSet::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, w) in ts.words.iter().enumerate() {
        seen.insert(w.as_str());
        let seen_tokens = i + 1;
        if seen_tokens % stride == 0 || seen_tokens == n {
            x.push(seen_tokens as f64);
            y.push(seen.len() as f64);
        }
    }
    series(LawId::Heaps, x, y)
}

/// Mean and population standard deviation of each word's per-segment counts.
///
/// Only words present in at least two segments contribute. Zero-σ words are
/// dropped; words sharing a mean are merged into one point (mean of σ).
pub fn taylor_series(ts: &TokenStream, segment_len: usize) -> EmpiricalSeries {
    let segment_len = segment_len.max(1);
    let segments = ts.words.len() / segment_len;
    if segments < 3 {
        return EmpiricalSeries::empty(LawId::Taylor);
    }
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut per_word: Vec<Vec<u32>> = Vec::new();
    for (seg, chunk) in ts.words.chunks_exact(segment_len).enumerate() {
        for w in chunk {
            let next = ids.len();
            let id = *ids.entry(w.as_str()).or_insert(next);
            if id == per_word.len() {
                per_word.push(vec![0; segments]);
            }
            per_word[id][seg] += 1;
        }
    }
    let s = segments as f64;
    // keyed by total count so equal means group exactly
    let mut by_total: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
    for counts in &per_word {
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            continue;
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let mean = total as f64 / s;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / s;
        if var <= 0.0 {
            continue;
        }
        let entry = by_total.entry(total).or_insert((0.0, 0));
        entry.0 += var.sqrt();
        entry.1 += 1;
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (total, (sigma_sum, k)) in by_total {
        x.push(total as f64 / s);
        y.push(sigma_sum / k as f64);
    }
    series(LawId::Taylor, x, y)
}

/// Plug-in Shannon entropy (nats) of the empirical distribution of
/// overlapping word n-grams.
pub fn block_entropy(words: &[String], block: usize) -> Option<f64> {
    if block == 0 || words.len() < block {
        return None;
    }
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    for gram in words.windows(block) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    let total = (words.len() - block + 1) as f64;
    // summed in a fixed order so the result is reproducible to the bit
    let mut freq: Vec<usize> = counts.into_values().collect();
    freq.sort_unstable();
    let h = freq
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>();
    Some(h.max(0.0))
}

/// Block entropy γ(μ) for μ = 1..=max_block.
pub fn hilberg_series(ts: &TokenStream, max_block: usize) -> EmpiricalSeries {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for mu in 1..=max_block {
        // at least two grams are needed for a non-trivial distribution
        if ts.words.len() < mu + 1 {
            break;
        }
        if let Some(h) = block_entropy(&ts.words, mu) {
            x.push(mu as f64);
            y.push(h);
        }
    }
    series(LawId::Hilberg, x, y)
}

/// Window lengths 2, 4, 8, … up to ⌊chars/8⌋.
pub fn ebeling_lengths(char_count: usize) -> Vec<usize> {
    let limit = char_count / 8;
    std::iter::successors(Some(2usize), |u| u.checked_mul(2))
        .take_while(|&u| u <= limit)
        .collect()
}

/// Summed across-window variance of character counts per window length.
pub fn ebeling_series(ts: &TokenStream) -> EmpiricalSeries {
    ebeling_series_with(ts, &ebeling_lengths(ts.chars.len()))
}

pub fn ebeling_series_with(ts: &TokenStream, lengths: &[usize]) -> EmpiricalSeries {
    let mut alphabet: HashMap<char, usize> = HashMap::new();
    let coded: Vec<usize> = ts
        .chars
        .iter()
        .map(|c| {
            let next = alphabet.len();
            *alphabet.entry(*c).or_insert(next)
        })
        .collect();
    let k = alphabet.len();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &u in lengths {
        if u == 0 {
            continue;
        }
        let windows = coded.len() / u;
        if windows < 2 {
            continue;
        }
        let mut sum = vec![0f64; k];
        let mut sum_sq = vec![0f64; k];
        let mut counts = vec![0u32; k];
        for window in coded.chunks_exact(u) {
            counts.iter_mut().for_each(|c| *c = 0);
            for &c in window {
                counts[c] += 1;
            }
            for (i, &c) in counts.iter().enumerate() {
                let c = c as f64;
                sum[i] += c;
                sum_sq[i] += c * c;
            }
        }
        let w = windows as f64;
        let m: f64 = sum
            .iter()
            .zip(&sum_sq)
            .map(|(s, sq)| (sq / w - (s / w).powi(2)).max(0.0))
            .sum();
        x.push(u as f64);
        y.push(m);
    }
    series(LawId::Ebeling, x, y)
}

/// Mean word length (letters) against sentence length (words).
pub fn menzerath_series(ts: &TokenStream) -> EmpiricalSeries {
    let mut groups: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for sentence in ts.sentence_words() {
        let letters: usize = sentence.iter().map(|w| w.chars().count()).sum();
        let g = groups.entry(sentence.len()).or_insert((0, 0));
        g.0 += letters;
        g.1 += sentence.len();
    }
    let (x, y) = groups
        .into_iter()
        .map(|(len, (letters, words))| (len as f64, letters as f64 / words as f64))
        .unzip();
    series(LawId::Menzerath, x, y)
}

/// First-digit relative frequencies of sentence lengths (digits 1..=9).
pub fn benford_series(ts: &TokenStream) -> EmpiricalSeries {
    let lengths: Vec<i64> = ts.sentences.iter().filter(|&&l| l > 0).map(|&l| l as i64).collect();
    let digits = first_digits(&lengths).expect("zero lengths filtered");
    let mut freq = [0f64; 9];
    for d in &digits {
        freq[(*d - 1) as usize] += 1.0;
    }
    if !digits.is_empty() {
        let n = digits.len() as f64;
        freq.iter_mut().for_each(|f| *f /= n);
    }
    series(LawId::Benford, (1..=9).map(f64::from).collect(), freq.to_vec())
}

pub fn build_series(law: LawId, ts: &TokenStream, params: &LawParams) -> Option<EmpiricalSeries> {
    Some(match law {
        LawId::Zipf => zipf_series(ts),
        LawId::Heaps => heaps_series(ts),
        LawId::Taylor => taylor_series(ts, params.taylor_segment_len),
        LawId::Hilberg => hilberg_series(ts, params.hilberg_max_block),
        LawId::Ebeling => ebeling_series(ts),
        LawId::Menzerath => menzerath_series(ts),
        LawId::Benford => benford_series(ts),
        LawId::Mandelbrot => return None,
    })
}

pub fn fit_series(series: &EmpiricalSeries) -> Result<LawFit, FitError> {
    match series.law {
        LawId::Benford => {
            let freqs: [f64; 9] = series
                .y
                .as_slice()
                .try_into()
                .map_err(|_| FitError::NotFittable("benford: expected 9 bins".into()))?;
            fit_benford(&freqs)
        }
        _ => fit_loglog(series),
    }
}

pub fn evaluate_law(law: LawId, ts: &TokenStream, params: &LawParams) -> LawReport {
    match build_series(law, ts, params) {
        Some(series) => {
            let fit = fit_series(&series);
            LawReport::from_result(series, fit)
        }
        None => LawReport::unfittable(law, "not a token-stream law"),
    }
}

pub const TOKEN_LAWS: [LawId; 7] = [
    LawId::Zipf,
    LawId::Heaps,
    LawId::Taylor,
    LawId::Hilberg,
    LawId::Ebeling,
    LawId::Menzerath,
    LawId::Benford,
];

/// Builds and fits all seven token-stream laws. Unfittable laws are
/// flagged in their report; the call itself never fails.
pub fn evaluate_all(ts: &TokenStream, params: &LawParams) -> Vec<LawReport> {
    TOKEN_LAWS
        .par_iter()
        .map(|&law| evaluate_law(law, ts, params))
        .collect()
}
