//! Dataset ingestion and tokenization.
//!
//! Every law consumes one of three views of a text: lowercased word tokens,
//! per-sentence word counts, or the raw alphabetic character sequence. All
//! three are produced in a single pass by [`tokenize`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: missing or non-string field \"{field}\"")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: empty id")]
    EmptyId { line: usize },
    #[error("line {line}: duplicate id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("value {value} at position {index} has no leading digit (must be >= 1)")]
    NonPositive { index: usize, value: i64 },
}

/// A text with an identifier and an optional class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Word, sentence and character views of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    /// Lowercased alphabetic word tokens in document order.
    pub words: Vec<String>,
    /// Word count of each non-empty sentence.
    pub sentences: Vec<usize>,
    /// Alphabetic characters, case preserved.
    pub chars: Vec<char>,
}

impl TokenStream {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Appends another stream; sentence boundaries of both are kept.
    pub fn extend(&mut self, other: TokenStream) {
        self.words.extend(other.words);
        self.sentences.extend(other.sentences);
        self.chars.extend(other.chars);
    }

    /// Iterates sentences as slices of `words`.
    pub fn sentence_words(&self) -> impl Iterator<Item = &[String]> + '_ {
        let mut offset = 0;
        self.sentences.iter().map(move |&len| {
            let s = &self.words[offset..offset + len];
            offset += len;
            s
        })
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<serde_json::Value>,
    text: Option<serde_json::Value>,
    label: Option<serde_json::Value>,
}

/// Loads a JSON Lines dataset. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(&line, lineno)?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: doc.id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn parse_record(line: &str, lineno: usize) -> Result<Document, CorpusError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::Json {
        line: lineno,
        message: e.to_string(),
    })?;
    let string_field = |v: Option<serde_json::Value>, field| match v {
        Some(serde_json::Value::String(s)) => Ok(s),
        _ => Err(CorpusError::MissingField {
            line: lineno,
            field,
        }),
    };
    let id = string_field(raw.id, "id")?;
    if id.is_empty() {
        return Err(CorpusError::EmptyId { line: lineno });
    }
    let text = string_field(raw.text, "text")?;
    let label = match raw.label {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(_) => {
            return Err(CorpusError::MissingField {
                line: lineno,
                field: "label",
            })
        }
    };
    Ok(Document { id, text, label })
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits a text into words, sentences and characters.
///
/// Words are maximal runs of alphabetic characters, lowercased. Sentences
/// end at `.`, `!` or `?`; runs of terminators collapse and sentences with
/// no words are dropped. Trailing text without a terminator is a sentence.
pub fn tokenize(doc: &Document) -> TokenStream {
    tokenize_text(&doc.text)
}

pub fn tokenize_text(text: &str) -> TokenStream {
    let mut ts = TokenStream::default();
    let mut word = String::new();
    let mut sentence_len = 0usize;

    let flush_word = |word: &mut String, ts: &mut TokenStream, sentence_len: &mut usize| {
        if !word.is_empty() {
            ts.words.push(word.to_lowercase());
            word.clear();
            *sentence_len += 1;
        }
    };

    for c in text.chars() {
        if c.is_alphabetic() {
            word.push(c);
            ts.chars.push(c);
            continue;
        }
        flush_word(&mut word, &mut ts, &mut sentence_len);
        if is_sentence_end(c) && sentence_len > 0 {
            ts.sentences.push(sentence_len);
            sentence_len = 0;
        }
    }
    flush_word(&mut word, &mut ts, &mut sentence_len);
    if sentence_len > 0 {
        ts.sentences.push(sentence_len);
    }
    ts
}

/// Tokenizes every document and concatenates the streams.
pub fn tokenize_all(docs: &[Document]) -> TokenStream {
    let mut ts = TokenStream::default();
    for d in docs {
        ts.extend(tokenize(d));
    }
    ts
}

/// Sentence substrings of `text` that contain at least one word, using the
/// same boundary rule as [`tokenize`].
pub fn sentence_spans(text: &str) -> Vec<&str> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut has_word = false;
    for (i, c) in text.char_indices() {
        if c.is_alphabetic() {
            has_word = true;
        } else if is_sentence_end(c) {
            if has_word {
                spans.push(text[start..i + c.len_utf8()].trim());
                has_word = false;
            }
            start = i + c.len_utf8();
        }
    }
    if has_word {
        spans.push(text[start..].trim());
    }
    spans
}

/// Leading decimal digit of each value.
pub fn first_digits(values: &[i64]) -> Result<Vec<u8>, CorpusError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value < 1 {
                return Err(CorpusError::NonPositive { index, value });
            }
            let mut v = value;
            while v >= 10 {
                v /= 10;
            }
            Ok(v as u8)
        })
        .collect()
}
