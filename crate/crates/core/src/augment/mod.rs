//! Paraphrase generation, suitability scoring and selection, dataset
//! emission, and side-by-side corpus comparison.

pub mod transport;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use crate::corpus::{tokenize, tokenize_all, Document};
use crate::fitkit::{ConformityVerdict, FitMetrics, LawId};
use crate::laws::{evaluate_all, LawParams, LawReport};
use crate::mfdfa::{mandelbrot_report, EmbeddingProvider, MfdfaConfig, MfdfaError, MultifractalSpectrum};
use crate::zscore::{aggregate, grade_metric, infer_suitability, LawVector, MetricGrade, MetricKind, Suitability, ZNumber};
pub use transport::{ChatMessage, ChatRequest, MockTransport, Recorder, ReplayRecord, ReplayTransport, SlotRequest, Transport, TransportError};
#[cfg(feature = "live")]
pub use transport::HttpTransport;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_PROMPT: &str = "You are a famous expert in the field of engineering. \
Based on your understanding, restate the text in {n} sentences.\n\n{text}";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("generation for \"{raw_id}\" stopped after {} instance(s): {source}", instances.len())]
    PartialGeneration {
        raw_id: String,
        instances: Vec<Document>,
        #[source]
        source: TransportError,
    },
    #[error(transparent)]
    Mfdfa(#[from] MfdfaError),
    #[error("duplicate output id \"{0}\"")]
    DuplicateId(String),
    #[error("run for \"{0}\" has no matching raw document")]
    UnknownRaw(String),
    #[error("corpus \"{0}\" is empty")]
    EmptyCorpus(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each further failure.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_instances: usize,
    /// `{n}` and `{text}` are substituted; without `{text}` the raw text is appended.
    pub prompt_template: String,
    pub top_fraction: f64,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_instances: 10,
            prompt_template: DEFAULT_PROMPT.to_string(),
            top_fraction: 0.5,
            model: "gpt-4".to_string(),
            temperature: 1.0,
            seed: 0,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        if self.n_instances == 0 {
            return bad("n_instances must be at least 1");
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return bad("top_fraction must lie in (0, 1]");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1");
        }
        if !self.temperature.is_finite() {
            return bad("temperature must be finite");
        }
        Ok(())
    }

    pub fn prompt(&self, text: &str) -> String {
        let p = self.prompt_template.replace("{n}", &self.n_instances.to_string());
        if p.contains("{text}") {
            p.replace("{text}", text)
        } else {
            format!("{p}\n\n{text}")
        }
    }

    pub fn request(&self, text: &str) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: self.prompt(text),
            }],
            temperature: self.temperature,
        }
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Number of instances kept out of `n`: `⌈fraction·n⌉`, at least one.
pub fn selection_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

pub fn instance_id(raw_id: &str, k: usize) -> String {
    format!("{raw_id}#gen{k}")
}

fn complete_slot(
    transport: &dyn Transport,
    req: &SlotRequest<'_>,
    retry: &RetryPolicy,
) -> Result<Option<String>, TransportError> {
    let mut last_err = None;
    for attempt in 0..retry.max_attempts {
        if attempt > 0 && retry.base_delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(retry.base_delay_ms << (attempt - 1).min(16)));
        }
        match transport.complete(req) {
            Ok(text) if !text.trim().is_empty() => return Ok(Some(text)),
            Ok(_) => last_err = None,
            Err(e) if e.is_retryable() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match last_err {
        Some(e) => Err(e),
        None => {
            warn!(slot = req.slot, "empty completion after retries; slot dropped");
            Ok(None)
        }
    }
}

/// A slot's final result: a completion, an empty completion (`None`), or an error.
type SlotOutcome = Result<Option<String>, TransportError>;

/// Requests `n_instances` paraphrases of `raw`, one request per slot, with
/// at most `max_in_flight` outstanding. Results are ordered by slot.
pub fn generate_instances(
    raw: &Document,
    cfg: &GenerationConfig,
    transport: &dyn Transport,
) -> Result<Vec<Document>, AugmentError> {
    cfg.validate()?;
    let request = cfg.request(&raw.text);
    let n = cfg.n_instances;
    let hashes: Vec<String> = (0..n).map(|k| request.slot_hash(k)).collect();
    let outcomes: Vec<Mutex<Option<SlotOutcome>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.max_in_flight.min(n) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= n {
                    break;
                }
                let req = SlotRequest {
                    request: &request,
                    source_text: &raw.text,
                    slot: k,
                    hash: &hashes[k],
                };
                let out = complete_slot(transport, &req, &cfg.retry);
                *outcomes[k].lock().expect("slot lock") = Some(out);
            });
        }
    });

    let mut instances = Vec::with_capacity(n);
    let mut failure = None;
    for (k, cell) in outcomes.into_iter().enumerate() {
        match cell.into_inner().expect("slot lock").expect("every slot ran") {
            Ok(Some(text)) => instances.push(Document {
                id: instance_id(&raw.id, k + 1),
                text,
                label: raw.label.clone(),
            }),
            Ok(None) => {}
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    match failure {
        None => Ok(instances),
        Some(source) => Err(AugmentError::PartialGeneration {
            raw_id: raw.id.clone(),
            instances,
            source,
        }),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub laws: LawParams,
    pub mfdfa: MfdfaConfig,
}

/// Fuzzy grades of one fittable law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawGrade {
    pub law: LawId,
    /// (R², KL, JS, MAPE).
    pub grades: [MetricGrade; 4],
    pub vector: LawVector,
}

pub fn grade_law(law: LawId, m: &FitMetrics) -> Option<LawGrade> {
    let values = [m.r2, m.kl, m.js, m.mape];
    let mut grades = [MetricGrade { low: 0.0, medium: 0.0, high: 0.0, badness: 0.0, interpolated: false }; 4];
    for (g, (kind, v)) in grades.iter_mut().zip(MetricKind::ALL.into_iter().zip(values)) {
        *g = grade_metric(kind, v).ok()?;
    }
    let vector = LawVector::from_badness(grades.map(|g| g.badness));
    Some(LawGrade { law, grades, vector })
}

/// Suitability from per-law metrics; `None` marks an unfittable law.
/// Returns the Z-number (absent when nothing was fittable) and `s`, which
/// is 0 in that case.
pub fn suitability_from_metrics(metrics: &[(LawId, Option<FitMetrics>)]) -> (Vec<LawGrade>, Option<ZNumber>, Suitability) {
    let grades: Vec<LawGrade> = metrics
        .iter()
        .filter_map(|(law, m)| m.as_ref().and_then(|m| grade_law(*law, m)))
        .collect();
    let vectors: Vec<LawVector> = grades.iter().map(|g| g.vector).collect();
    match aggregate(&vectors) {
        Ok(z) => (grades, Some(z), infer_suitability(&z)),
        Err(_) => (
            grades,
            None,
            Suitability {
                s: 0.0,
                s_prime_centroid: 1.0,
            },
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub instance: Document,
    pub law_reports: Vec<LawReport>,
    pub law_grades: Vec<LawGrade>,
    pub z: Option<ZNumber>,
    pub suitability: Suitability,
    /// Laws left out of the aggregate because they could not be fitted.
    pub excluded: Vec<LawId>,
    /// No law was fittable, so `s` was set to 0.
    pub no_signal: bool,
    /// 1-based position by descending `s`; 0 until ranked.
    pub rank: usize,
}

/// Fits all eight laws on `instance` alone and infers its suitability.
pub fn score_instance(
    instance: &Document,
    params: &ScoringParams,
    provider: &dyn EmbeddingProvider,
) -> Result<ScoredInstance, AugmentError> {
    let ts = tokenize(instance);
    let mut law_reports = evaluate_all(&ts, &params.laws);
    let (mandelbrot, _) = mandelbrot_report(std::slice::from_ref(instance), provider, &params.mfdfa)?;
    law_reports.push(mandelbrot);
    let metrics: Vec<(LawId, Option<FitMetrics>)> =
        law_reports.iter().map(|r| (r.law, r.fit.as_ref().map(|f| f.metrics))).collect();
    let (law_grades, z, suitability) = suitability_from_metrics(&metrics);
    let excluded: Vec<LawId> = LawId::ALL
        .into_iter()
        .filter(|law| !law_grades.iter().any(|g| g.law == *law))
        .collect();
    Ok(ScoredInstance {
        instance: instance.clone(),
        law_reports,
        law_grades,
        no_signal: z.is_none(),
        z,
        suitability,
        excluded,
        rank: 0,
    })
}

pub fn score_instances(
    instances: &[Document],
    params: &ScoringParams,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<ScoredInstance>, AugmentError> {
    instances.par_iter().map(|d| score_instance(d, params, provider)).collect()
}

/// Sorts by descending `s` (ties by ascending id) and assigns ranks.
pub fn rank_instances(instances: &mut [ScoredInstance]) {
    instances.sort_by(|a, b| {
        b.suitability
            .s
            .total_cmp(&a.suitability.s)
            .then_with(|| a.instance.id.cmp(&b.instance.id))
    });
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.rank = i + 1;
    }
}

/// The top `⌈fraction·n⌉` instances by rank.
pub fn select_augmented(instances: &[ScoredInstance], top_fraction: f64) -> Vec<ScoredInstance> {
    let mut ranked = instances.to_vec();
    rank_instances(&mut ranked);
    ranked.truncate(selection_count(ranked.len(), top_fraction));
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub transport: String,
    pub config_hash: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRun {
    pub raw: Document,
    /// All scored instances in rank order.
    pub instances: Vec<ScoredInstance>,
    pub selected_count: usize,
    pub provenance: Provenance,
}

impl AugmentationRun {
    pub fn selected(&self) -> &[ScoredInstance] {
        &self.instances[..self.selected_count]
    }
}

/// Scores already generated instances of `raw` and selects the best.
pub fn build_run(
    raw: &Document,
    instances: &[Document],
    cfg: &GenerationConfig,
    params: &ScoringParams,
    provider: &dyn EmbeddingProvider,
    transport_id: String,
    started_at: DateTime<Utc>,
) -> Result<AugmentationRun, AugmentError> {
    let mut scored = score_instances(instances, params, provider)?;
    rank_instances(&mut scored);
    let selected_count = selection_count(scored.len(), cfg.top_fraction);
    Ok(AugmentationRun {
        raw: raw.clone(),
        instances: scored,
        selected_count,
        provenance: Provenance {
            transport: transport_id,
            config_hash: cfg.hash(),
            started_at,
            finished_at: Utc::now(),
        },
    })
}

/// Generates, scores and selects paraphrases of one raw example.
pub fn augment_raw(
    raw: &Document,
    cfg: &GenerationConfig,
    transport: &dyn Transport,
    params: &ScoringParams,
    provider: &dyn EmbeddingProvider,
) -> Result<AugmentationRun, AugmentError> {
    let started_at = Utc::now();
    let instances = generate_instances(raw, cfg, transport)?;
    build_run(raw, &instances, cfg, params, provider, transport.id(), started_at)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub origin: Origin,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suitability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Raw,
    Aug,
}

/// Raw documents followed by every run's selected instances.
pub fn dataset_records(raws: &[Document], runs: &[AugmentationRun]) -> Result<Vec<DatasetRecord>, AugmentError> {
    let mut records: Vec<DatasetRecord> = raws
        .iter()
        .map(|d| DatasetRecord {
            id: d.id.clone(),
            text: d.text.clone(),
            label: d.label.clone(),
            origin: Origin::Raw,
            source_id: d.id.clone(),
            suitability: None,
        })
        .collect();
    for run in runs {
        let raw = raws
            .iter()
            .find(|d| d.id == run.raw.id)
            .ok_or_else(|| AugmentError::UnknownRaw(run.raw.id.clone()))?;
        for inst in run.selected() {
            records.push(DatasetRecord {
                id: inst.instance.id.clone(),
                text: inst.instance.text.clone(),
                label: raw.label.clone(),
                origin: Origin::Aug,
                source_id: raw.id.clone(),
                suitability: Some(inst.suitability.s),
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(AugmentError::DuplicateId(dup.id.clone()));
    }
    Ok(records)
}

/// Writes `bytes` through a temporary file in the target directory, so a
/// failed write leaves nothing behind. Creates the directory if needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AugmentError> {
    let io = |source: std::io::Error| AugmentError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Writes `items` as JSONL, atomically.
pub fn write_jsonl_atomic<T: Serialize>(path: &Path, items: &[T]) -> Result<(), AugmentError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| AugmentError::Io { path: path.to_path_buf(), source: e.into() })?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Writes `value` as pretty-printed JSON, atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), AugmentError> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| AugmentError::Io { path: path.to_path_buf(), source: e.into() })?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

/// Writes the augmented training set. Returns the number of records.
pub fn emit_dataset(raws: &[Document], runs: &[AugmentationRun], path: impl AsRef<Path>) -> Result<usize, AugmentError> {
    let records = dataset_records(raws, runs)?;
    write_jsonl_atomic(path.as_ref(), &records)?;
    Ok(records.len())
}

/// One law's fit for one corpus; fields are null when it was unfittable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawRow {
    pub law: LawId,
    pub exponent: Option<f64>,
    pub secondary_exponent: Option<f64>,
    pub prefactor: Option<f64>,
    pub metrics: Option<FitMetrics>,
    pub verdict: Option<ConformityVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl From<&LawReport> for LawRow {
    fn from(r: &LawReport) -> Self {
        Self {
            law: r.law,
            exponent: r.fit.as_ref().map(|f| f.exponent),
            secondary_exponent: r.fit.as_ref().and_then(|f| f.secondary_exponent),
            prefactor: r.fit.as_ref().map(|f| f.prefactor),
            metrics: r.fit.as_ref().map(|f| f.metrics),
            verdict: r.fit.as_ref().map(|f| f.metrics.verdict()),
            reason: r.reason.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusAnalysis {
    pub name: String,
    pub documents: usize,
    pub tokens: usize,
    pub sentences: usize,
    pub reports: Vec<LawReport>,
    pub spectrum: Option<MultifractalSpectrum>,
}

impl CorpusAnalysis {
    pub fn rows(&self) -> Vec<LawRow> {
        self.reports.iter().map(LawRow::from).collect()
    }
}

/// All eight laws on the concatenation of `docs`.
pub fn analyze_corpus(
    name: &str,
    docs: &[Document],
    params: &ScoringParams,
    provider: &dyn EmbeddingProvider,
) -> Result<CorpusAnalysis, AugmentError> {
    if docs.is_empty() {
        return Err(AugmentError::EmptyCorpus(name.to_string()));
    }
    let ts = tokenize_all(docs);
    let mut reports = evaluate_all(&ts, &params.laws);
    let (mandelbrot, analysis) = mandelbrot_report(docs, provider, &params.mfdfa)?;
    reports.push(mandelbrot);
    Ok(CorpusAnalysis {
        name: name.to_string(),
        documents: docs.len(),
        tokens: ts.words.len(),
        sentences: ts.sentences.len(),
        reports,
        spectrum: analysis.map(|a| a.spectrum),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusColumn {
    pub name: String,
    pub documents: usize,
    pub tokens: usize,
    pub rows: Vec<LawRow>,
    pub spectrum: Option<MultifractalSpectrum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub corpora: [CorpusColumn; 2],
}

impl ComparisonReport {
    /// Metric cells (law × metric) that are missing, per corpus.
    pub fn null_cells(&self) -> [usize; 2] {
        self.corpora
            .each_ref()
            .map(|c| c.rows.iter().filter(|r| r.metrics.is_none()).count() * 4)
    }
}

pub fn compare_corpora(
    a: (&str, &[Document]),
    b: (&str, &[Document]),
    params: &ScoringParams,
    provider: &dyn EmbeddingProvider,
) -> Result<ComparisonReport, AugmentError> {
    let column = |(name, docs): (&str, &[Document])| -> Result<CorpusColumn, AugmentError> {
        let an = analyze_corpus(name, docs, params, provider)?;
        Ok(CorpusColumn {
            rows: an.rows(),
            name: an.name,
            documents: an.documents,
            tokens: an.tokens,
            spectrum: an.spectrum,
        })
    };
    Ok(ComparisonReport {
        schema_version: SCHEMA_VERSION,
        corpora: [column(a)?, column(b)?],
    })
}
