//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use langscale::augment::{
    augment_raw, compare_corpora, emit_dataset, suitability_from_metrics, GenerationConfig, MockTransport, RetryPolicy,
    ScoringParams,
};
use langscale::corpus::{load_jsonl, sentence_spans, Document, TokenStream};
use langscale::fitkit::{fit_benford, fit_loglog, fit_metrics, FitMetrics, LawId};
use langscale::laws::zipf_series;
use langscale::mfdfa::{
    analyze_series, default_q_grid, default_scales, fluctuation, profile, spectrum, FallbackEmbedder, MfdfaConfig,
    ScalarSeries, UnitKind,
};
use langscale::zscore::{grade_metric, infer_suitability, MetricKind, TriMF, ZNumber};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Inverse-CDF sampler over ranks 1..=types with P(r) ∝ r^-alpha.
fn zipf_tokens(alpha: f64, types: usize, tokens: usize, seed: u64) -> Vec<String> {
    let mut cdf: Vec<f64> = Vec::with_capacity(types);
    let mut acc = 0.0;
    for r in 1..=types {
        acc += (r as f64).powf(-alpha);
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tokens)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let idx = cdf.partition_point(|&c| c < u).min(types - 1);
            format!("w{idx}")
        })
        .collect()
}

fn c1_power_law_recovery() -> Outcome {
    let start = Instant::now();
    let ts = TokenStream {
        words: zipf_tokens(1.0, 10_000, 100_000, 1),
        ..Default::default()
    };
    let fit = fit_loglog(&zipf_series(&ts)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let alpha = -fit.exponent;
    check((alpha - 1.0).abs() <= 0.05, format!("alpha {alpha:.4} outside 1 ± 0.05"))?;
    check(fit.metrics.r2 > 0.95, format!("r2 {:.4} ≤ 0.95", fit.metrics.r2))?;
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("alpha = {alpha:.4} (±0.05), r2 = {:.4} (>0.95), {elapsed:.2?} (<5s)", fit.metrics.r2))
}

fn c2_metric_exactness() -> Outcome {
    let m = fit_metrics(&[0.5, 0.5], &[0.25, 0.75]).map_err(|e| e.to_string())?;
    let kl = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    check((m.kl - kl).abs() < 1e-6, format!("kl {} vs {kl}", m.kl))?;
    check((m.kl - 0.1438).abs() < 5e-5, format!("kl {} vs 0.1438", m.kl))?;
    check((m.mape - 0.5).abs() < 1e-6, format!("mape {}", m.mape))?;
    let obs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
    let id = fit_metrics(&obs, &obs).map_err(|e| e.to_string())?;
    check(
        (id.r2 - 1.0).abs() < 1e-6 && id.kl.abs() < 1e-6 && id.js.abs() < 1e-6 && id.mape.abs() < 1e-6,
        format!("identity gave {id:?}"),
    )?;
    Ok(format!("kl = {:.6}, mape = {:.6}, identity = (1,0,0,0) to 1e-6", m.kl, m.mape))
}

fn c3_threshold_verdicts() -> Outcome {
    let base = FitMetrics { r2: 0.95, kl: 0.1, js: 0.1, mape: 0.1 };
    let d = 1e-12;
    let cases = [
        (FitMetrics { r2: 0.9, ..base }.verdict().r2, false),
        (FitMetrics { r2: 0.9 + d, ..base }.verdict().r2, true),
        (FitMetrics { kl: 0.5, ..base }.verdict().kl, false),
        (FitMetrics { kl: 0.5 - d, ..base }.verdict().kl, true),
        (FitMetrics { js: 0.2, ..base }.verdict().js, false),
        (FitMetrics { js: 0.2 - d, ..base }.verdict().js, true),
        (FitMetrics { mape: 0.5, ..base }.verdict().mape, false),
        (FitMetrics { mape: 0.5 - d, ..base }.verdict().mape, true),
    ];
    let wrong = cases.iter().filter(|(got, want)| got != want).count();
    check(wrong == 0, format!("{wrong} of 8 boundary checks wrong"))?;
    Ok("r2 > 0.9, kl < 0.5, js < 0.2, mape < 0.5 hold on both sides of each boundary".into())
}

/// Independent OLS of ln f on [1, d, ln d] via the normal equations and
/// Cramer's rule; returns the R² of the renormalized fit.
fn benford_oracle_r2(f: &[f64; 9]) -> f64 {
    let rows: Vec<[f64; 3]> = (1..=9).map(|d| [1.0, d as f64, (d as f64).ln()]).collect();
    let y: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (r, yi) in rows.iter().zip(&y) {
        for i in 0..3 {
            b[i] += r[i] * yi;
            for j in 0..3 {
                a[i][j] += r[i] * r[j];
            }
        }
    }
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d0 = det(a);
    let beta: Vec<f64> = (0..3)
        .map(|k| {
            let mut m = a;
            for i in 0..3 {
                m[i][k] = b[i];
            }
            det(m) / d0
        })
        .collect();
    let raw: Vec<f64> = rows.iter().map(|r| (beta[0] + beta[1] * r[1] + beta[2] * r[2]).exp()).collect();
    let s: f64 = raw.iter().sum();
    let fitted: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let mean = f.iter().sum::<f64>() / 9.0;
    let ss_res: f64 = f.iter().zip(&fitted).map(|(p, q)| (p - q).powi(2)).sum();
    let ss_tot: f64 = f.iter().map(|p| (p - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn c4_benford() -> Outcome {
    let mut exact = [0.0; 9];
    for (i, v) in exact.iter_mut().enumerate() {
        *v = (1.0 + 1.0 / (i + 1) as f64).log10();
    }
    let fit = fit_benford(&exact).map_err(|e| e.to_string())?;
    let oracle = benford_oracle_r2(&exact);
    check(oracle >= 0.99, format!("oracle r2 {oracle} < 0.99"))?;
    check(fit.metrics.r2 >= 0.99, format!("r2 {} < 0.99", fit.metrics.r2))?;
    check((fit.metrics.r2 - oracle).abs() < 1e-9, format!("r2 {} differs from oracle {oracle}", fit.metrics.r2))?;
    let uni = fit_benford(&[1.0 / 9.0; 9]).map_err(|e| e.to_string())?;
    let omega = uni.secondary_exponent.unwrap_or(f64::NAN);
    check(uni.exponent.abs() < 1e-9 && (omega - 1.0).abs() < 1e-9, format!("uniform gave kappa {} omega {omega}", uni.exponent))?;
    Ok(format!(
        "exact r2 = {:.6} (oracle {:.6}, ≥0.99); uniform kappa = {:.1e}, omega - 1 = {:.1e} (1e-9)",
        fit.metrics.r2,
        oracle,
        uni.exponent,
        omega - 1.0
    ))
}

fn binomial_cascade(p: f64, levels: u32) -> Vec<f64> {
    (0..1usize << levels)
        .map(|i| {
            let ones = i.count_ones() as i32;
            p.powi(ones) * (1.0 - p).powi(levels as i32 - ones)
        })
        .collect()
}

fn cascade_h(p: f64, q: f64) -> f64 {
    (1.0 - (p.powf(q) + (1.0 - p).powf(q)).log2()) / q
}

fn c5_mfdfa() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = ScalarSeries {
        values: (0..100_000).map(|_| rng.gen::<f64>() - 0.5).collect(),
        provider: "white-noise".into(),
        unit: UnitKind::Sentence,
    };
    let an = analyze_series(&noise, &MfdfaConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let h2 = an.mandelbrot.exponent;
    check((h2 - 0.5).abs() <= 0.07, format!("white noise h(2) = {h2:.4}"))?;
    check(elapsed < Duration::from_secs(10), format!("10^5 points took {elapsed:?}"))?;

    let q_grid: Vec<f64> = (-10..=10).filter(|&i| i != 0).map(|i| i as f64 * 0.5).collect();
    let cascade = binomial_cascade(0.3, 14);
    let prof = profile(&cascade);
    let grid = fluctuation(&prof, &default_scales(prof.len(), 12), &q_grid, 1).map_err(|e| e.to_string())?;
    let sp = spectrum(&grid).map_err(|e| e.to_string())?;
    check(sp.q_grid.len() == q_grid.len(), "cascade lost q values".into())?;
    let worst = sp
        .q_grid
        .iter()
        .zip(&sp.h)
        .map(|(&q, &h)| (h - cascade_h(0.3, q)).abs())
        .fold(0.0, f64::max);
    check(worst <= 0.05, format!("cascade max |h - analytic| = {worst:.4}"))?;

    let tau_exact = an.spectrum.q_grid.iter().zip(&an.spectrum.h).zip(&an.spectrum.tau).all(|((q, h), t)| *t == q * h - 1.0);
    check(tau_exact, "tau(q) != q h(q) - 1".into())?;

    let reversed: Vec<f64> = noise.values.iter().rev().cloned().collect();
    let rp = profile(&reversed);
    let fp = profile(&noise.values);
    let scales = default_scales(fp.len(), 12);
    let q = default_q_grid();
    let fa = fluctuation(&fp, &scales, &q, 1).map_err(|e| e.to_string())?;
    let fb = fluctuation(&rp, &scales, &q, 1).map_err(|e| e.to_string())?;
    let rel = fa
        .values
        .iter()
        .flatten()
        .zip(fb.values.iter().flatten())
        .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    check(rel <= 1e-9, format!("reversal changed F_q(s) by {rel:.2e}"))?;
    Ok(format!(
        "white noise h(2) = {h2:.4} (0.5±0.07) in {elapsed:.2?} (<10s); cascade max err {worst:.4} (≤0.05); tau exact; reversal {rel:.1e} (≤1e-9)"
    ))
}

fn c6_fuzzy_units() -> Outcome {
    let t = TriMF::new(0.1, 0.15, 0.2);
    check(
        t.membership(0.15) == 1.0 && t.membership(0.1) == 0.0 && t.membership(0.2) == 0.0 && t.membership(0.5) == 0.0,
        "trimf apex/foot".into(),
    )?;
    let g = grade_metric(MetricKind::R2, 0.85).map_err(|e| e.to_string())?;
    check((g.medium - 1.0).abs() < 1e-12 && g.low == 0.0 && g.high == 0.0, format!("1-R² = 0.15 graded {g:?}"))?;
    let mut violations = 0;
    for bi in 0..=100 {
        let b_t = 0.5 * bi as f64 / 100.0;
        let mut prev = f64::INFINITY;
        for ai in 0..=100 {
            let s = infer_suitability(&ZNumber { a_t: ai as f64 / 100.0, b_t, laws_used: 1 }).s;
            if s > prev + 1e-12 {
                violations += 1;
            }
            prev = s;
        }
    }
    check(violations == 0, format!("{violations} monotonicity violations"))?;
    Ok("trimf apex/feet exact; 1-R² = 0.15 → Medium 1; 101×101 grid, 0 violations".into())
}

fn c7_anchors() -> Outcome {
    let s00 = infer_suitability(&ZNumber { a_t: 0.0, b_t: 0.0, laws_used: 8 }).s;
    check(s00 >= 0.85, format!("s(0,0) = {s00}"))?;
    check((s00 - 0.8833342857142857).abs() < 1e-9, format!("s(0,0) = {s00} differs from reference"))?;
    let mut worst: f64 = 0.0;
    for bi in 0..=20 {
        let s = infer_suitability(&ZNumber { a_t: 1.0, b_t: bi as f64 * 0.05, laws_used: 8 }).s;
        check((s - 0.11666571428571426).abs() < 1e-9, format!("s(1, {}) = {s}", bi as f64 * 0.05))?;
        worst = worst.max(s);
    }
    check(worst <= 0.15, format!("max s(1,·) = {worst}"))?;
    Ok(format!("s(0,0) = {s00:.10} (≥0.85, ref 0.8833342857); max s(1,·) = {worst:.10} (≤0.15, ref 0.1166657143)"))
}

/// 50 raw examples of 3 to 8 consecutive sentences from the Alice chapters.
fn alice_raws() -> Result<Vec<Document>, String> {
    let docs = load_jsonl(data("alice.jsonl")).map_err(|e| e.to_string())?;
    let sentences: Vec<String> = docs.iter().flat_map(|d| sentence_spans(&d.text)).map(str::to_string).collect();
    let mut raws = Vec::new();
    let mut pos = 0;
    for i in 0..50 {
        let len = 3 + i % 6;
        let text = sentences[pos..pos + len].join(" ");
        pos += len + 7;
        raws.push(Document::new(format!("raw{i:02}"), text).with_label(format!("level{}", i % 5 + 1)));
    }
    Ok(raws)
}

fn run_pipeline(raws: &[Document], out: &std::path::Path) -> Result<usize, String> {
    let cfg = GenerationConfig {
        n_instances: 10,
        top_fraction: 0.5,
        seed: 7,
        retry: RetryPolicy { max_attempts: 1, base_delay_ms: 0 },
        ..Default::default()
    };
    let transport = MockTransport::new(cfg.seed);
    let params = ScoringParams::default();
    let runs = raws
        .iter()
        .map(|r| augment_raw(r, &cfg, &transport, &params, &FallbackEmbedder))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    emit_dataset(raws, &runs, out).map_err(|e| e.to_string())
}

/// sha256 of the emitted dataset; any platform must reproduce it.
const PIPELINE_SHA256: &str = "1a43921fce810e796015dc71975960bc02c4a9996dece10a68ea166d768e1e43";

fn c8_pipeline() -> Outcome {
    let raws = alice_raws()?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let start = Instant::now();
    let n = run_pipeline(&raws, &a)?;
    run_pipeline(&raws, &b)?;
    let elapsed = start.elapsed();
    let (ba, bb) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
    let lines = ba.iter().filter(|&&c| c == b'\n').count();
    check(n == 300 && lines == 300, format!("{n} records, {lines} lines; expected 300"))?;
    check(ba == bb, "two runs differ".into())?;
    let digest = hex::encode(Sha256::digest(&ba));
    check(
        digest == PIPELINE_SHA256,
        format!("dataset sha256 {digest} differs from pinned {PIPELINE_SHA256}"),
    )?;
    Ok(format!("50 raws × 10 × 0.5 → {n} records, byte-identical over two runs, sha256 {digest} ({elapsed:.2?})"))
}

fn c9_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut fitted_laws = 0;
    for _ in 0..100 {
        let k = rng.gen_range(1..=8u32) as usize;
        let mut worse = Vec::new();
        let mut better = Vec::new();
        for &law in &LawId::ALL[..k] {
            let w = FitMetrics {
                r2: rng.gen_range(0.3..1.0),
                kl: rng.gen_range(0.0..1.2),
                js: rng.gen_range(0.0..0.8),
                mape: rng.gen_range(0.0..1.2),
            };
            let f: f64 = rng.gen_range(0.05..1.0);
            let b = FitMetrics {
                r2: w.r2 + (1.0 - w.r2) * f * rng.gen::<f64>(),
                kl: w.kl * (1.0 - f * rng.gen::<f64>()),
                js: w.js * (1.0 - f * rng.gen::<f64>()),
                mape: w.mape * (1.0 - f * rng.gen::<f64>()),
            };
            worse.push((law, Some(w)));
            better.push((law, Some(b)));
        }
        // the remaining laws are unfittable for both
        for &law in &LawId::ALL[k..] {
            worse.push((law, None));
            better.push((law, None));
        }
        fitted_laws += k;
        let (_, _, sw) = suitability_from_metrics(&worse);
        let (_, _, sb) = suitability_from_metrics(&better);
        if sb.s < sw.s - 1e-12 {
            violations += 1;
        }
    }
    check(violations == 0, format!("{violations} of 100 constructions violated dominance"))?;
    Ok(format!("100 constructions ({fitted_laws} fitted laws), 0 violations"))
}

fn c10_comparison() -> Outcome {
    let alice = load_jsonl(data("alice.jsonl")).map_err(|e| e.to_string())?;
    let sonnets = load_jsonl(data("sonnets.jsonl")).map_err(|e| e.to_string())?;
    let report = compare_corpora(("alice", &alice), ("sonnets", &sonnets), &ScoringParams::default(), &FallbackEmbedder)
        .map_err(|e| e.to_string())?;
    let [ca, cb] = &report.corpora;
    check(ca.rows.len() == 8 && cb.rows.len() == 8, "expected 8 laws per corpus".into())?;
    let nulls = report.null_cells();
    check(nulls == [0, 0], format!("null cells {nulls:?}"))?;
    let finite = report.corpora.iter().flat_map(|c| &c.rows).all(|r| {
        r.exponent.is_some_and(f64::is_finite)
            && r.metrics.is_some_and(|m| [m.r2, m.kl, m.js, m.mape].iter().all(|v| v.is_finite()))
    });
    check(finite, "non-finite exponent or metric".into())?;
    println!("      {:<11} {:>9} {:>7} {:>7} {:>7} {:>7} | {:>9} {:>7} {:>7} {:>7} {:>7}", "law", "alice exp", "r2", "kl", "js", "mape", "sonnet exp", "r2", "kl", "js", "mape");
    for (ra, rb) in ca.rows.iter().zip(&cb.rows) {
        let (ma, mb) = (ra.metrics.unwrap(), rb.metrics.unwrap());
        println!(
            "      {:<11} {:>9.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} | {:>9.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            ra.law.name(),
            ra.exponent.unwrap(),
            ma.r2,
            ma.kl,
            ma.js,
            ma.mape,
            rb.exponent.unwrap(),
            mb.r2,
            mb.kl,
            mb.js,
            mb.mape
        );
    }
    Ok(format!("8 laws × 4 metrics × 2 corpora ({} and {} tokens), 0 null cells, all finite", ca.tokens, cb.tokens))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("power-law recovery", c1_power_law_recovery),
        ("metric exactness", c2_metric_exactness),
        ("threshold verdicts", c3_threshold_verdicts),
        ("benford", c4_benford),
        ("mfdfa oracles", c5_mfdfa),
        ("fuzzy unit suite", c6_fuzzy_units),
        ("z-number anchors", c7_anchors),
        ("pipeline determinism", c8_pipeline),
        ("dominance", c9_dominance),
        ("corpus comparison", c10_comparison),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
