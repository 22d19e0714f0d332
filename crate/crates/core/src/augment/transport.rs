//! Chat-completion transports: a seeded mock, a replay file, and HTTP.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{sentence_spans, tokenize_text};

/// Environment variable holding the API key for the HTTP transport.
pub const API_KEY_ENV: &str = "ZGPTDA_API_KEY";

#[derive(Debug, Error)]
pub enum TransportError {
    /// Worth another attempt (timeouts, rate limits, server errors).
    #[error("retryable: {0}")]
    Retryable(String),
    #[error("{0}")]
    Fatal(String),
    #[error("no recorded completion for request {0}")]
    MissingReplay(String),
    #[error("replay file {path}: {message}")]
    ReplayFile { path: PathBuf, message: String },
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Retryable(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire body of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Replay key of one generation slot: sha256 of the canonical request
    /// JSON, a newline, and the slot index.
    pub fn slot_hash(&self, slot: usize) -> String {
        let body = serde_json::to_string(self).expect("request serializes");
        let mut h = Sha256::new();
        h.update(body.as_bytes());
        h.update(format!("\n{slot}").as_bytes());
        hex::encode(h.finalize())
    }
}

/// One generation call as seen by a transport.
#[derive(Debug, Clone, Copy)]
pub struct SlotRequest<'a> {
    pub request: &'a ChatRequest,
    /// The raw text being paraphrased (used only by the mock).
    pub source_text: &'a str,
    pub slot: usize,
    pub hash: &'a str,
}

pub trait Transport: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, req: &SlotRequest<'_>) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, req: &SlotRequest<'_>) -> Result<String, TransportError> {
        (**self).complete(req)
    }
}

/// Deterministic paraphrase stand-in: reshuffles and trims the source's
/// sentences and words with a generator seeded from the seed and slot hash.
#[derive(Debug, Clone)]
pub struct MockTransport {
    pub seed: u64,
}

impl MockTransport {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, hash: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(hash.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    pub fn paraphrase(&self, text: &str, hash: &str) -> String {
        let mut rng = self.rng(hash);
        let mut sentences: Vec<Vec<String>> = sentence_spans(text)
            .into_iter()
            .map(|s| tokenize_text(s).words)
            .filter(|w| !w.is_empty())
            .collect();
        if sentences.is_empty() {
            return String::new();
        }
        sentences.shuffle(&mut rng);
        let mut out = Vec::with_capacity(sentences.len());
        for mut words in sentences {
            let len = words.len() as u32;
            if len > 3 && rng.gen_bool(0.5) {
                words.remove(rng.gen_range(0..len) as usize);
            }
            if words.len() > 1 && rng.gen_bool(0.5) {
                let i = rng.gen_range(0..words.len() as u32 - 1) as usize;
                words.swap(i, i + 1);
            }
            if rng.gen_bool(0.3) {
                let i = rng.gen_range(0..words.len() as u32) as usize;
                let w = words[i].clone();
                words.insert(i, w);
            }
            let mut s = words.join(" ");
            if let Some(first) = s.get(..1) {
                s = first.to_uppercase() + &s[1..];
            }
            out.push(s + ".");
        }
        out.join(" ")
    }
}

impl Transport for MockTransport {
    fn id(&self) -> String {
        format!("mock:{}", self.seed)
    }

    fn complete(&self, req: &SlotRequest<'_>) -> Result<String, TransportError> {
        Ok(self.paraphrase(req.source_text, req.hash))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub request_hash: String,
    pub completion: String,
}

/// Serves completions saved from an earlier run.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    path: PathBuf,
    completions: BTreeMap<String, String>,
}

impl ReplayTransport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TransportError> {
        let path = path.as_ref().to_path_buf();
        let file_err = |message: String| TransportError::ReplayFile { path: path.clone(), message };
        let reader = BufReader::new(File::open(&path).map_err(|e| file_err(e.to_string()))?);
        let mut completions = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| file_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord =
                serde_json::from_str(&line).map_err(|e| file_err(format!("line {}: {e}", i + 1)))?;
            completions.insert(rec.request_hash, rec.completion);
        }
        Ok(Self { path, completions })
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn id(&self) -> String {
        format!("replay:{}", self.path.display())
    }

    fn complete(&self, req: &SlotRequest<'_>) -> Result<String, TransportError> {
        self.completions
            .get(req.hash)
            .cloned()
            .ok_or_else(|| TransportError::MissingReplay(req.hash.to_string()))
    }
}

/// Wraps a transport and keeps every successful completion for saving as
/// a replay file.
pub struct Recorder<T> {
    inner: T,
    records: Mutex<BTreeMap<String, String>>,
}

impl<T: Transport> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            records: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn records(&self) -> Vec<ReplayRecord> {
        self.records
            .lock()
            .expect("recorder lock")
            .iter()
            .map(|(k, v)| ReplayRecord {
                request_hash: k.clone(),
                completion: v.clone(),
            })
            .collect()
    }

    /// Writes the records as JSONL, sorted by hash.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let path = path.as_ref();
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        for rec in self.records() {
            serde_json::to_writer(&mut tmp, &rec)?;
            tmp.write_all(b"\n")?;
        }
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, req: &SlotRequest<'_>) -> Result<String, TransportError> {
        let text = self.inner.complete(req)?;
        self.records
            .lock()
            .expect("recorder lock")
            .insert(req.hash.to_string(), text.clone());
        Ok(text)
    }
}

#[cfg(feature = "live")]
pub use http::HttpTransport;

#[cfg(feature = "live")]
mod http {
    use super::*;
    use std::time::Duration;

    /// OpenAI-style chat-completions endpoint.
    pub struct HttpTransport {
        endpoint: String,
        api_key: Option<String>,
        client: reqwest::blocking::Client,
    }

    impl HttpTransport {
        pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| TransportError::Fatal(e.to_string()))?;
            Ok(Self {
                endpoint: endpoint.into(),
                api_key,
                client,
            })
        }

        /// Reads the API key from the environment.
        pub fn from_env(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, TransportError> {
            Self::new(endpoint, std::env::var(API_KEY_ENV).ok(), timeout)
        }
    }

    impl Transport for HttpTransport {
        fn id(&self) -> String {
            format!("http:{}", self.endpoint)
        }

        fn complete(&self, req: &SlotRequest<'_>) -> Result<String, TransportError> {
            let mut call = self.client.post(&self.endpoint).json(req.request);
            if let Some(key) = &self.api_key {
                call = call.bearer_auth(key);
            }
            let resp = call.send().map_err(|e| TransportError::Retryable(e.to_string()))?;
            let status = resp.status();
            if status.as_u16() == 429 || status.is_server_error() {
                return Err(TransportError::Retryable(format!("status {status}")));
            }
            if !status.is_success() {
                return Err(TransportError::Fatal(format!("status {status}")));
            }
            let body: serde_json::Value = resp.json().map_err(|e| TransportError::Retryable(e.to_string()))?;
            body.pointer("/choices/0/message/content")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| TransportError::Fatal("response lacks choices[0].message.content".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: "restate".into(),
            }],
            temperature: 1.0,
        }
    }

    #[test]
    fn slot_hash_is_stable_and_slot_specific() {
        let r = request();
        assert_eq!(r.slot_hash(0), r.slot_hash(0));
        assert_ne!(r.slot_hash(0), r.slot_hash(1));
        assert_eq!(r.slot_hash(0).len(), 64);
    }

    #[test]
    fn mock_is_deterministic() {
        let r = request();
        let text = "The pump fails. Pressure rises in the line. Operators open the relief valve quickly.";
        let h = r.slot_hash(3);
        let req = SlotRequest { request: &r, source_text: text, slot: 3, hash: &h };
        let a = MockTransport::new(7).complete(&req).unwrap();
        assert_eq!(a, MockTransport::new(7).complete(&req).unwrap());
        assert_eq!(sentence_spans(&a).len(), 3);
        let h2 = r.slot_hash(4);
        let other = SlotRequest { slot: 4, hash: &h2, ..req };
        let outs: Vec<String> = (0..5u64).map(|s| MockTransport::new(s).complete(&other).unwrap()).collect();
        assert!(outs.iter().any(|o| *o != a));
        assert_eq!(MockTransport::new(1).paraphrase("...", "x"), "");
    }

    #[test]
    fn record_then_replay() {
        let r = request();
        let rec = Recorder::new(MockTransport::new(1));
        let hashes: Vec<String> = (0..3).map(|k| r.slot_hash(k)).collect();
        let outs: Vec<String> = hashes
            .iter()
            .enumerate()
            .map(|(k, h)| rec.complete(&SlotRequest { request: &r, source_text: "A b c. D e f.", slot: k, hash: h }).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gens.jsonl");
        rec.save(&path).unwrap();
        let replay = ReplayTransport::load(&path).unwrap();
        assert_eq!(replay.len(), 3);
        for (k, h) in hashes.iter().enumerate() {
            let req = SlotRequest { request: &r, source_text: "", slot: k, hash: h };
            assert_eq!(replay.complete(&req).unwrap(), outs[k]);
        }
        let missing = SlotRequest { request: &r, source_text: "", slot: 9, hash: "nope" };
        assert!(matches!(replay.complete(&missing), Err(TransportError::MissingReplay(_))));
        assert!(ReplayTransport::load(dir.path().join("absent.jsonl")).is_err());
    }
}
