//! Node feature matrices: bag-of-words counts or precomputed LLM document
//! embeddings, with rows aligned to corpus order.

mod bow;
mod client;
mod io;

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub use bow::{build_bow, BowWeighting};
pub use client::{fetch_embeddings, whitespace_token_count, EmbedClientConfig, FetchOutcome};
pub use io::{id_manifest_path, load_embeddings, load_matrix, save_embeddings_jsonl, save_matrix};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no eligible tokens for bag-of-words features")]
    NoTokens,
    #[error("missing embeddings for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("embedding dimension mismatch for {id} (record {record}): expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in features of {id}")]
    NonFinite { id: String },
    #[error("feature rows ({rows}) do not match ids ({ids})")]
    Shape { rows: usize, ids: usize },
    #[error("row order does not match corpus at row {row}: {found:?} vs {expected:?}")]
    Misaligned {
        row: usize,
        expected: String,
        found: String,
    },
    #[error("bad feature file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("environment variable {0} with the API key is not set")]
    ApiKeyMissing(String),
    #[error("embedding request failed after {attempts} attempts: {message}")]
    Http { attempts: usize, message: String },
    #[error("embedding response index set does not match request ({message})")]
    ResponseIndex { message: String },
    #[error("invalid client config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Bow,
    Llm,
    /// Graph-propagated features `T^p X`.
    Propagated,
    /// Low-dimensional cluster embedding `Y W`.
    Embedding,
}

impl FeatureKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            FeatureKind::Bow => 0,
            FeatureKind::Llm => 1,
            FeatureKind::Propagated => 2,
            FeatureKind::Embedding => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => FeatureKind::Bow,
            1 => FeatureKind::Llm,
            2 => FeatureKind::Propagated,
            3 => FeatureKind::Embedding,
            _ => return None,
        })
    }
}

/// Dense `n x d` document feature matrix; row `i` belongs to `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    ids: Vec<String>,
    values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, ids: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if ids.len() != values.nrows() {
            return Err(FeatureError::Shape {
                rows: values.nrows(),
                ids: ids.len(),
            });
        }
        for (i, row) in values.row_iter().enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::NonFinite { id: ids[i].clone() });
            }
        }
        Ok(Self { kind, ids, values })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Same ids, new values and kind (e.g. after propagation).
    pub fn with_values(&self, kind: FeatureKind, values: DMatrix<f64>) -> Result<Self> {
        Self::new(kind, self.ids.clone(), values)
    }

    /// Verifies row `i` belongs to corpus document `i` for every row.
    pub fn check_alignment(&self, corpus: &Corpus) -> Result<()> {
        if self.n() != corpus.len() {
            return Err(FeatureError::Shape {
                rows: self.n(),
                ids: corpus.len(),
            });
        }
        for (row, (id, doc)) in self.ids.iter().zip(corpus.docs()).enumerate() {
            if *id != doc.id {
                return Err(FeatureError::Misaligned {
                    row,
                    expected: doc.id.clone(),
                    found: id.clone(),
                });
            }
        }
        Ok(())
    }
}
