//! FAQ retrieval and customer-service NLP toolkit.
//!
//! Implements the full pipeline around a pluggable feature encoder:
//!
//! - corpus ingestion, number anonymization, preprocessing and construction
//!   of (question, candidates, answer) ranking datasets ([`corpus`])
//! - subword vocabulary training and greedy tokenization ([`tokenizer`])
//! - BM25+ inverted-index retrieval ([`bm25`])
//! - TF-IDF n-grams, truncated-SVD projections, string similarity and
//!   question-answer pair features ([`features`])
//! - pointwise/pairwise ranking heads, label smoothing, hinge loss, an
//!   AdamW optimizer with linear warmup, and random forests ([`learn`])
//! - two-view co-training label expansion ([`cotrain`])
//! - MRR/AP retrieval metrics, classification F1 and re-ranking ([`rank_eval`])
//! - BILOU tagging, token classification and entity-level F1 ([`ner`])
//! - post-training INT8 quantization and latency benchmarking ([`quant`])
//!
//! Deterministic synthetic datasets for tests and demos live in [`synth`].

pub mod bm25;
pub mod corpus;
pub mod cotrain;
pub mod error;
pub mod features;
pub mod learn;
pub mod matrix;
pub mod ner;
pub mod quant;
pub mod rank_eval;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
pub(crate) mod bytesio;
