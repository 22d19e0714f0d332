//! Scaling-law conformity of text and fuzzy selection of paraphrases.
//!
//! Texts are tokenized ([`corpus`]), turned into empirical series for seven
//! token-level laws ([`laws`]) plus a multifractal series ([`mfdfa`]), fitted
//! and scored ([`fitkit`]), graded through Z-number fuzzy inference
//! ([`zscore`]), and used to rank generated paraphrases ([`augment`]).

pub mod augment;
pub mod corpus;
pub mod fitkit;
pub mod laws;
pub mod mfdfa;
pub mod zscore;

pub use corpus::{load_jsonl, tokenize, tokenize_all, tokenize_text, CorpusError, Document, TokenStream};
pub use fitkit::{fit_benford, fit_loglog, fit_metrics, EmpiricalSeries, FitError, FitMetrics, LawFit, LawId};
pub use laws::{evaluate_all, LawParams, LawReport};
