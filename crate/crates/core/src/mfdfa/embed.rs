//! Text-to-vector providers used to turn a document into a scalar series.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

pub const FALLBACK_DIMENSION: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no vector for document \"{doc_id}\" unit {index}")]
    MissingUnit { doc_id: String, index: usize },
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("embedding file: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Provider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Sentence,
    Word,
}

/// One embeddable piece of a document.
#[derive(Debug, Clone, Copy)]
pub struct TextUnit<'a> {
    pub doc_id: &'a str,
    /// Position of the unit within its document (0-based).
    pub index: usize,
    pub text: &'a str,
    pub kind: UnitKind,
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, unit: &TextUnit<'_>) -> Result<Vec<f64>, EmbedError>;

    /// Whether `embed` may be called from several threads at once.
    fn concurrency_safe(&self) -> bool {
        false
    }
}

/// Hashed byte-trigram frequency vectors, L2-normalized.
///
/// Uses FNV-1a so the mapping is identical on every platform.
#[derive(Debug, Clone, Default)]
pub struct FallbackEmbedder;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl FallbackEmbedder {
    pub fn vector(text: &str) -> Vec<f64> {
        let bytes = text.as_bytes();
        let mut v = vec![0f64; FALLBACK_DIMENSION];
        if bytes.len() < 3 {
            if !bytes.is_empty() {
                v[(fnv1a(bytes) % FALLBACK_DIMENSION as u64) as usize] += 1.0;
            }
        } else {
            for gram in bytes.windows(3) {
                v[(fnv1a(gram) % FALLBACK_DIMENSION as u64) as usize] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for FallbackEmbedder {
    fn id(&self) -> &str {
        "fallback-trigram-64"
    }

    fn embed(&self, unit: &TextUnit<'_>) -> Result<Vec<f64>, EmbedError> {
        Ok(Self::vector(unit.text))
    }

    fn concurrency_safe(&self) -> bool {
        true
    }
}

#[derive(Deserialize)]
struct VectorRecord {
    id: String,
    unit_index: usize,
    vector: Vec<f64>,
}

/// Precomputed vectors keyed by document id and unit index.
#[derive(Debug, Clone, Default)]
pub struct FileEmbeddings {
    id: String,
    dimension: usize,
    vectors: HashMap<(String, usize), Vec<f64>>,
}

impl FileEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut out = FileEmbeddings {
            id: format!("file:{}", path.display()),
            ..Default::default()
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let fmt_err = |message: String| EmbedError::Format { line: lineno, message };
            let rec: VectorRecord = serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
            if rec.vector.is_empty() || rec.vector.iter().any(|v| !v.is_finite()) {
                return Err(fmt_err("vector must be non-empty and finite".into()));
            }
            if out.dimension == 0 {
                out.dimension = rec.vector.len();
            } else if rec.vector.len() != out.dimension {
                return Err(fmt_err(format!(
                    "dimension {} differs from {}",
                    rec.vector.len(),
                    out.dimension
                )));
            }
            let key = (rec.id, rec.unit_index);
            if out.vectors.contains_key(&key) {
                return Err(fmt_err(format!("duplicate unit {} for \"{}\"", key.1, key.0)));
            }
            out.vectors.insert(key, rec.vector);
        }
        Ok(out)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, unit: &TextUnit<'_>) -> Result<Vec<f64>, EmbedError> {
        self.vectors
            .get(&(unit.doc_id.to_string(), unit.index))
            .cloned()
            .ok_or_else(|| EmbedError::MissingUnit {
                doc_id: unit.doc_id.to_string(),
                index: unit.index,
            })
    }

    fn concurrency_safe(&self) -> bool {
        true
    }
}
