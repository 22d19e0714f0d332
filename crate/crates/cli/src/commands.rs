//! The three subcommands.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use chrono::Utc;
use langscale::augment::{
    analyze_corpus, augment_raw, build_run, compare_corpora, emit_dataset, write_atomic, write_json_atomic,
    AugmentError, AugmentationRun, ComparisonReport, GenerationConfig, LawRow, MockTransport, Recorder,
    ReplayTransport, ScoringParams, Transport, SCHEMA_VERSION,
};
use langscale::corpus::{load_jsonl, Document};
use langscale::fitkit::LawId;
use langscale::laws::LawReport;
use langscale::mfdfa::{EmbeddingProvider, FallbackEmbedder, FileEmbeddings, MfdfaError, MultifractalSpectrum};
use serde::Serialize;
use tracing::{error, info, warn};

use crate::args::{AnalysisOpts, AnalyzeArgs, AugmentArgs, CompareArgs, TransportKind, DEFAULT_ENDPOINT};
use crate::manifest::RunManifest;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or malformed input, unwritable output.
    Input(anyhow::Error),
    /// The transport or embedding provider gave up.
    Transport(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Transport(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Transport(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::PartialGeneration { .. }
            | AugmentError::Mfdfa(MfdfaError::Provider { .. } | MfdfaError::DimensionMismatch { .. }) => {
                Failure::Transport(e.into())
            }
            _ => Failure::Input(e.into()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn load(path: &Path, manifest: &mut RunManifest) -> Result<Vec<Document>, Failure> {
    manifest.add_input(path);
    let docs = load_jsonl(path).with_context(|| format!("cannot load {}", path.display()))?;
    if docs.is_empty() {
        return Err(anyhow!("{} holds no documents", path.display()).into());
    }
    info!(path = %path.display(), documents = docs.len(), "loaded corpus");
    Ok(docs)
}

fn provider(opts: &AnalysisOpts, manifest: &mut RunManifest) -> Result<Box<dyn EmbeddingProvider>, Failure> {
    match &opts.embeddings {
        Some(path) => {
            manifest.add_input(path);
            let emb = FileEmbeddings::load(path).with_context(|| format!("cannot load embeddings {}", path.display()))?;
            Ok(Box::new(emb))
        }
        None => Ok(Box::new(FallbackEmbedder)),
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    path.as_deref().ok_or_else(|| Failure::Input(anyhow!("missing {what}")))
}

fn corpus_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn warn_unfittable(reports: &[LawReport], corpus: &str, manifest: &mut RunManifest) {
    for r in reports.iter().filter(|r| !r.fittable) {
        let msg = format!("{corpus}: {} not fittable: {}", r.law, r.reason.as_deref().unwrap_or("unknown reason"));
        warn!("{msg}");
        manifest.warnings.push(msg);
    }
}

fn snapshot<T: Serialize>(flags: &T, resolved: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "flags": flags, "resolved": resolved })
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    schema_version: u32,
    name: &'a str,
    documents: usize,
    tokens: usize,
    sentences: usize,
    laws: Vec<LawRow>,
    reports: &'a [LawReport],
    spectrum: Option<&'a MultifractalSpectrum>,
}

pub fn analyze(args: &AnalyzeArgs, manifest: &mut RunManifest) -> Outcome {
    let params = args.analysis.scoring_params()?;
    manifest.config = snapshot(args, serde_json::json!({ "scoring": params }));
    let input = required(&args.input, "input corpus")?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    let docs = load(input, manifest)?;
    let provider = provider(&args.analysis, manifest)?;
    let name = corpus_name(input);
    let an = analyze_corpus(&name, &docs, &params, provider.as_ref())?;
    warn_unfittable(&an.reports, &name, manifest);
    let report = AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        name: &an.name,
        documents: an.documents,
        tokens: an.tokens,
        sentences: an.sentences,
        laws: an.rows(),
        reports: &an.reports,
        spectrum: an.spectrum.as_ref(),
    };
    write_json_atomic(&out, &report)?;
    manifest.outputs.push(out);
    if let Some(dir) = &args.series_csv {
        manifest.outputs.extend(write_series_csv(dir, &an.reports, an.spectrum.as_ref())?);
    }
    Ok(())
}

/// Formats a q value for a file name: 2 → "2", -0.5 → "-0.5".
fn q_label(q: f64) -> String {
    format!("{q}")
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).context("csv")?;
    for row in rows {
        w.write_record(&row).context("csv")?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("csv: {e}"))?)
}

/// One CSV per law (`x,y`), one per q of the fluctuation function
/// (`scale,fq`), and the spectrum itself.
fn write_series_csv(dir: &Path, reports: &[LawReport], spectrum: Option<&MultifractalSpectrum>) -> Result<Vec<PathBuf>, Failure> {
    let mut written = Vec::new();
    let mut put = |name: String, body: Vec<u8>| -> Result<(), Failure> {
        let path = dir.join(name);
        write_atomic(&path, &body)?;
        written.push(path);
        Ok(())
    };
    for r in reports {
        let rows = r.series.x.iter().zip(&r.series.y).map(|(x, y)| vec![x.to_string(), y.to_string()]);
        put(format!("{}.csv", r.law), csv_bytes(&["x", "y"], rows)?)?;
    }
    if let Some(sp) = spectrum {
        for (qi, q) in sp.q_grid.iter().enumerate() {
            let rows = sp.scales.iter().zip(&sp.fluctuation[qi]).map(|(s, f)| vec![s.to_string(), f.to_string()]);
            put(format!("fluctuation_q{}.csv", q_label(*q)), csv_bytes(&["scale", "fq"], rows)?)?;
        }
        let rows = (0..sp.q_grid.len()).map(|i| {
            [sp.q_grid[i], sp.h[i], sp.tau[i], sp.alpha[i], sp.f_alpha[i]].iter().map(f64::to_string).collect()
        });
        put("spectrum.csv".into(), csv_bytes(&["q", "h", "tau", "alpha", "f_alpha"], rows)?)?;
    }
    Ok(written)
}

fn grid_csv(report: &ComparisonReport) -> Result<Vec<u8>, Failure> {
    let mut header = vec!["law".to_string()];
    for c in &report.corpora {
        for col in ["exponent", "r2", "kl", "js", "mape"] {
            header.push(format!("{}_{col}", c.name));
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let rows = LawId::ALL.iter().enumerate().map(|(i, law)| {
        let mut row = vec![law.name().to_string()];
        for c in &report.corpora {
            let r = &c.rows[i];
            let m = r.metrics;
            row.extend([
                cell(r.exponent),
                cell(m.map(|m| m.r2)),
                cell(m.map(|m| m.kl)),
                cell(m.map(|m| m.js)),
                cell(m.map(|m| m.mape)),
            ]);
        }
        row
    });
    csv_bytes(&header, rows)
}

pub fn compare(args: &CompareArgs, manifest: &mut RunManifest) -> Outcome {
    let params = args.analysis.scoring_params()?;
    manifest.config = snapshot(args, serde_json::json!({ "scoring": params }));
    let a = required(&args.a, "first corpus")?;
    let b = required(&args.b, "second corpus")?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("comparison.json"));
    let docs_a = load(a, manifest)?;
    let docs_b = load(b, manifest)?;
    let provider = provider(&args.analysis, manifest)?;
    let report = compare_corpora(
        (&corpus_name(a), &docs_a),
        (&corpus_name(b), &docs_b),
        &params,
        provider.as_ref(),
    )?;
    for c in &report.corpora {
        for r in c.rows.iter().filter(|r| r.metrics.is_none()) {
            let msg = format!("{}: {} not fittable: {}", c.name, r.law, r.reason.as_deref().unwrap_or("unknown reason"));
            warn!("{msg}");
            manifest.warnings.push(msg);
        }
    }
    write_json_atomic(&out, &report)?;
    manifest.outputs.push(out);
    if let Some(csv) = &args.csv {
        write_atomic(csv, &grid_csv(&report)?)?;
        manifest.outputs.push(csv.clone());
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoresReport<'a> {
    schema_version: u32,
    transport: String,
    config: &'a GenerationConfig,
    config_hash: String,
    scoring: &'a ScoringParams,
    complete: bool,
    runs: &'a [AugmentationRun],
}

fn transport(args: &AugmentArgs, cfg: &GenerationConfig, manifest: &mut RunManifest) -> Result<Box<dyn Transport>, Failure> {
    let kind = args
        .transport
        .ok_or_else(|| Failure::Input(anyhow!("missing --transport (live, replay or mock)")))?;
    Ok(match kind {
        TransportKind::Mock => Box::new(MockTransport::new(cfg.seed)),
        TransportKind::Replay => {
            let path = required(&args.replay_file, "--replay-file for --transport replay")?;
            manifest.add_input(path);
            let t = ReplayTransport::load(path).map_err(|e| Failure::Input(e.into()))?;
            info!(completions = t.len(), "loaded replay file");
            Box::new(t)
        }
        TransportKind::Live => live_transport(args)?,
    })
}

#[cfg(feature = "live")]
fn live_transport(args: &AugmentArgs) -> Result<Box<dyn Transport>, Failure> {
    use langscale::augment::transport::API_KEY_ENV;
    use langscale::augment::HttpTransport;
    if std::env::var_os(API_KEY_ENV).is_none() {
        return Err(Failure::Input(anyhow!("--transport live needs the API key in {API_KEY_ENV}")));
    }
    let endpoint = args.endpoint.clone().unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
    let timeout = Duration::from_secs(args.timeout_secs.unwrap_or(60));
    Ok(Box::new(HttpTransport::from_env(endpoint, timeout).map_err(|e| Failure::Input(e.into()))?))
}

#[cfg(not(feature = "live"))]
fn live_transport(_: &AugmentArgs) -> Result<Box<dyn Transport>, Failure> {
    let _ = (DEFAULT_ENDPOINT, Duration::ZERO);
    Err(Failure::Input(anyhow!("this build has no live transport")))
}

pub fn augment(args: &AugmentArgs, manifest: &mut RunManifest) -> Outcome {
    let cfg = args.generation_config();
    let params = args.analysis.scoring_params()?;
    manifest.seed = Some(cfg.seed);
    manifest.config = snapshot(args, serde_json::json!({ "generation": cfg, "scoring": params }));
    cfg.validate()?;
    let input = required(&args.input, "input corpus")?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("augmented.jsonl"));
    let scores_path = args.scores.clone().unwrap_or_else(|| sibling(&out, "scores.json"));
    let raws = load(input, manifest)?;
    let provider = provider(&args.analysis, manifest)?;
    let inner = transport(args, &cfg, manifest)?;
    let recorder = Recorder::new(inner);
    let transport_id = recorder.id();

    let mut runs = Vec::with_capacity(raws.len());
    let mut failure = None;
    for raw in &raws {
        match augment_raw(raw, &cfg, &recorder, &params, provider.as_ref()) {
            Ok(run) => {
                for inst in run.instances.iter().filter(|i| !i.excluded.is_empty()) {
                    let excluded: Vec<&str> = inst.excluded.iter().map(|l| l.name()).collect();
                    info!(id = %inst.instance.id, excluded = ?excluded, "laws excluded from scoring");
                }
                info!(raw = %raw.id, generated = run.instances.len(), selected = run.selected_count, "scored");
                runs.push(run);
            }
            Err(AugmentError::PartialGeneration { raw_id, instances, source }) => {
                error!(raw = %raw_id, obtained = instances.len(), "transport gave up: {source}");
                if args.keep_partial && !instances.is_empty() {
                    runs.push(build_run(raw, &instances, &cfg, &params, provider.as_ref(), transport_id.clone(), Utc::now())?);
                }
                failure = Some(Failure::Transport(anyhow!(
                    "generation for \"{raw_id}\" stopped after {} instance(s): {source}",
                    instances.len()
                )));
                break;
            }
            Err(e) => {
                failure = Some(e.into());
                break;
            }
        }
    }

    if let Some(path) = &args.record_file {
        recorder.save(path).with_context(|| format!("cannot write {}", path.display()))?;
        manifest.outputs.push(path.clone());
    }
    let transport_failed = matches!(failure, Some(Failure::Transport(_)));
    if failure.is_none() || (transport_failed && args.keep_partial) {
        let records = emit_dataset(&raws, &runs, &out)?;
        manifest.outputs.push(out.clone());
        let scores = ScoresReport {
            schema_version: SCHEMA_VERSION,
            transport: transport_id,
            config: &cfg,
            config_hash: cfg.hash(),
            scoring: &params,
            complete: failure.is_none(),
            runs: &runs,
        };
        write_json_atomic(&scores_path, &scores)?;
        manifest.outputs.push(scores_path);
        info!(records, path = %out.display(), "wrote dataset");
    }
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(name),
        _ => PathBuf::from(name),
    }
}

/// Default manifest location: beside the command's main output.
pub fn manifest_path(main_output: Option<&Path>) -> PathBuf {
    sibling(main_output.unwrap_or(Path::new(".")), "run_manifest.json")
}
