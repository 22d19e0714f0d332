//! Command-line flags. Every flag can also come from a JSON config file
//! whose keys are the flag names in snake_case; flags given on the command
//! line win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use langscale::augment::{GenerationConfig, RetryPolicy, ScoringParams};
use langscale::laws::LawParams;
use langscale::mfdfa::MfdfaConfig;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "langscale", version, about = "Scaling-law conformity of text, and fuzzy selection of generated paraphrases")]
pub struct Cli {
    /// JSON file supplying defaults for any flag of the chosen command
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Where to write the run manifest [default: run_manifest.json next to the main output]
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit every law to one corpus
    Analyze(AnalyzeArgs),
    /// Fit every law to two corpora side by side
    Compare(CompareArgs),
    /// Generate, score and select paraphrases of each raw example
    Augment(Box<AugmentArgs>),
}

/// Options shared by every command that fits laws.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOpts {
    /// JSONL of precomputed unit vectors ({id, unit_index, vector}); default is the built-in hashed embedder
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Words per segment for Taylor's law [default: 100]
    #[arg(long)]
    pub taylor_segment_len: Option<usize>,
    /// Largest block length for Hilberg's law [default: 6]
    #[arg(long)]
    pub hilberg_max_block: Option<usize>,
    /// Polynomial detrending order for MFDFA, 1 to 3 [default: 1]
    #[arg(long)]
    pub detrend_order: Option<usize>,
    /// Number of MFDFA scales [default: 12]
    #[arg(long)]
    pub scale_count: Option<usize>,
    /// q whose fluctuation function gives the Mandelbrot row [default: 2]
    #[arg(long)]
    pub q_ref: Option<f64>,
}

impl AnalysisOpts {
    fn merge(self, file: Self) -> Self {
        Self {
            embeddings: self.embeddings.or(file.embeddings),
            taylor_segment_len: self.taylor_segment_len.or(file.taylor_segment_len),
            hilberg_max_block: self.hilberg_max_block.or(file.hilberg_max_block),
            detrend_order: self.detrend_order.or(file.detrend_order),
            scale_count: self.scale_count.or(file.scale_count),
            q_ref: self.q_ref.or(file.q_ref),
        }
    }

    pub fn scoring_params(&self) -> anyhow::Result<ScoringParams> {
        let laws = LawParams::default();
        let mfdfa = MfdfaConfig::default();
        let params = ScoringParams {
            laws: LawParams {
                taylor_segment_len: self.taylor_segment_len.unwrap_or(laws.taylor_segment_len),
                hilberg_max_block: self.hilberg_max_block.unwrap_or(laws.hilberg_max_block),
            },
            mfdfa: MfdfaConfig {
                detrend_order: self.detrend_order.unwrap_or(mfdfa.detrend_order),
                scale_count: self.scale_count.unwrap_or(mfdfa.scale_count),
                q_ref: self.q_ref.unwrap_or(mfdfa.q_ref),
                ..mfdfa
            },
        };
        if params.laws.taylor_segment_len == 0 {
            bail!("--taylor-segment-len must be at least 1");
        }
        if params.laws.hilberg_max_block == 0 {
            bail!("--hilberg-max-block must be at least 1");
        }
        if !(1..=3).contains(&params.mfdfa.detrend_order) {
            bail!("--detrend-order must be 1, 2 or 3");
        }
        if params.mfdfa.scale_count < 3 {
            bail!("--scale-count must be at least 3");
        }
        if !params.mfdfa.q_grid.iter().any(|q| (q - params.mfdfa.q_ref).abs() < 1e-9) {
            bail!("--q-ref must be a multiple of 0.5 in [-10, 10]");
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeArgs {
    /// Corpus as JSONL ({id, text, label?} per line)
    pub input: Option<PathBuf>,
    /// Report file [default: report.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for plot data: one CSV per law and one per q of F_q(s)
    #[arg(long)]
    pub series_csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisOpts,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareArgs {
    /// First corpus (JSONL)
    pub a: Option<PathBuf>,
    /// Second corpus (JSONL)
    pub b: Option<PathBuf>,
    /// Comparison report [default: comparison.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the law × metric grid as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    /// HTTP chat-completions endpoint; key from ZGPTDA_API_KEY
    Live,
    /// Completions recorded by an earlier run (--replay-file)
    Replay,
    /// Seeded offline paraphraser
    Mock,
}

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentArgs {
    /// Raw examples (JSONL)
    pub input: Option<PathBuf>,
    /// Augmented dataset, raws followed by selected paraphrases [default: augmented.jsonl]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-instance score report [default: scores.json next to --out]
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub transport: Option<TransportKind>,
    /// Recorded completions for --transport replay
    #[arg(long)]
    pub replay_file: Option<PathBuf>,
    /// Save every completion received, for later replay
    #[arg(long)]
    pub record_file: Option<PathBuf>,
    /// Chat-completions URL for --transport live
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Request timeout in seconds for --transport live [default: 60]
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Prompt with {n} and {text} placeholders
    #[arg(long)]
    pub prompt_template: Option<String>,
    /// Paraphrases requested per raw example [default: 10]
    #[arg(long)]
    pub n: Option<usize>,
    /// Share of paraphrases kept per raw example [default: 0.5]
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Seed for all randomness [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent requests per raw example [default: 4]
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Attempts per request before giving up [default: 3]
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// First retry delay in milliseconds, doubled per attempt [default: 500]
    #[arg(long)]
    pub base_delay_ms: Option<u64>,
    /// On transport failure, still write what was generated (exit code stays 2)
    #[arg(long)]
    pub keep_partial: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisOpts,
}

impl AugmentArgs {
    pub fn generation_config(&self) -> GenerationConfig {
        let d = GenerationConfig::default();
        GenerationConfig {
            n_instances: self.n.unwrap_or(d.n_instances),
            prompt_template: self.prompt_template.clone().unwrap_or(d.prompt_template),
            top_fraction: self.fraction.unwrap_or(d.top_fraction),
            model: self.model.clone().unwrap_or(d.model),
            temperature: self.temperature.unwrap_or(d.temperature),
            seed: self.seed.unwrap_or(d.seed),
            max_in_flight: self.max_in_flight.unwrap_or(d.max_in_flight),
            retry: RetryPolicy {
                max_attempts: self.max_attempts.unwrap_or(d.retry.max_attempts),
                base_delay_ms: self.base_delay_ms.unwrap_or(d.retry.base_delay_ms),
            },
        }
    }
}

/// Reads a config file, rejecting keys that are not flags of the command.
fn read_config<T: Serialize + DeserializeOwned + Default>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
    let Some(map) = value.as_object() else {
        bail!("config {} must hold a JSON object", path.display());
    };
    let known = serde_json::to_value(T::default())?;
    let known = known.as_object().expect("flag structs serialize to objects");
    if let Some(key) = map.keys().find(|k| !known.contains_key(*k)) {
        bail!("config {}: unknown key \"{key}\"", path.display());
    }
    serde_json::from_value(value).with_context(|| format!("config {}", path.display()))
}

impl AnalyzeArgs {
    pub fn with_config(self, path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(self) };
        let file: Self = read_config(path)?;
        Ok(Self {
            input: self.input.or(file.input),
            out: self.out.or(file.out),
            series_csv: self.series_csv.or(file.series_csv),
            analysis: self.analysis.merge(file.analysis),
        })
    }
}

impl CompareArgs {
    pub fn with_config(self, path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(self) };
        let file: Self = read_config(path)?;
        Ok(Self {
            a: self.a.or(file.a),
            b: self.b.or(file.b),
            out: self.out.or(file.out),
            csv: self.csv.or(file.csv),
            analysis: self.analysis.merge(file.analysis),
        })
    }
}

impl AugmentArgs {
    pub fn with_config(self, path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(self) };
        let file: Self = read_config(path)?;
        Ok(Self {
            input: self.input.or(file.input),
            out: self.out.or(file.out),
            scores: self.scores.or(file.scores),
            transport: self.transport.or(file.transport),
            replay_file: self.replay_file.or(file.replay_file),
            record_file: self.record_file.or(file.record_file),
            endpoint: self.endpoint.or(file.endpoint),
            timeout_secs: self.timeout_secs.or(file.timeout_secs),
            model: self.model.or(file.model),
            temperature: self.temperature.or(file.temperature),
            prompt_template: self.prompt_template.or(file.prompt_template),
            n: self.n.or(file.n),
            fraction: self.fraction.or(file.fraction),
            seed: self.seed.or(file.seed),
            max_in_flight: self.max_in_flight.or(file.max_in_flight),
            max_attempts: self.max_attempts.or(file.max_attempts),
            base_delay_ms: self.base_delay_ms.or(file.base_delay_ms),
            keep_partial: self.keep_partial || file.keep_partial,
            analysis: self.analysis.merge(file.analysis),
        })
    }
}
