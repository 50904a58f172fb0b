//! CBOW Word2Vec with negative sampling, used as the entity similarity model.

mod io;
mod train;

use std::borrow::Cow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabulary;

pub use io::{load_vectors, save_vectors, FORMAT_VERSION, MAGIC};
pub use train::{
    cbow_step, noise_distribution, train_cbow, CbowExample, TrainedModel, WeightTable,
};

#[derive(Debug, Error)]
pub enum W2vError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("no training windows")]
    NoTrainingWindows,
    #[error("training diverged (non-finite weights); lower initial_lr")]
    Diverged,
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("not a vector file (bad magic at offset 0)")]
    BadMagic,
    #[error("unsupported vector file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated vector file at offset {offset}")]
    Truncated { offset: usize },
    #[error("corrupt vector file at offset {offset}: {message}")]
    Corrupt { offset: usize, message: String },
}

pub type Result<T> = std::result::Result<T, W2vError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct W2vConfig {
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub initial_lr: f32,
    pub min_lr: f32,
    pub seed: u64,
    /// 1 = deterministic single-threaded; more = lock-free parallel updates.
    pub threads: usize,
}

impl Default for W2vConfig {
    fn default() -> Self {
        Self {
            dim: 500,
            window: 5,
            min_count: 10,
            epochs: 20,
            negative_samples: 5,
            initial_lr: 0.025,
            min_lr: 1e-4,
            seed: 1,
            threads: 1,
        }
    }
}

impl W2vConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(W2vError::Config(msg.to_owned()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.negative_samples == 0 {
            return bad("negative_samples must be >= 1");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if !(self.initial_lr > 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.initial_lr) {
            return bad("learning rates must satisfy 0 <= min_lr <= initial_lr, initial_lr > 0");
        }
        Ok(())
    }
}

/// Any token -> vector provider usable for entity similarity search.
pub trait TokenVectors: Sync {
    fn dim(&self) -> usize;

    fn vector(&self, token: &str) -> Option<Cow<'_, [f32]>>;

    /// When true, distinct tokens are never similar and only identical
    /// tokens match (cosine 1). Lets callers skip the pairwise search.
    fn exact_only(&self) -> bool {
        false
    }
}

/// Trained input vectors, one row per vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    vocab: Vocabulary,
    dim: usize,
    data: Vec<f32>,
}

impl WordVectors {
    pub fn new(vocab: Vocabulary, dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(vocab.len() * dim, data.len(), "matrix shape mismatch");
        Self { vocab, dim, data }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn matrix(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vocab.index_of(token).map(|i| self.row(i))
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (u, v) = (self.get(a)?, self.get(b)?);
        crate::graph::cosine_sim(u, v).ok()
    }
}

impl TokenVectors for WordVectors {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, token: &str) -> Option<Cow<'_, [f32]>> {
        self.get(token).map(Cow::Borrowed)
    }
}

/// One-hot vectors over a fixed token set: identical tokens have cosine 1,
/// distinct tokens 0. Stands in for a trained model when entity matching
/// should be exact-string only.
#[derive(Debug, Clone, Default)]
pub struct ExactMatchVectors {
    index: HashMap<String, usize>,
}

impl ExactMatchVectors {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        for t in tokens {
            let n = index.len();
            index.entry(t.into()).or_insert(n);
        }
        Self { index }
    }
}

impl TokenVectors for ExactMatchVectors {
    fn dim(&self) -> usize {
        self.index.len()
    }

    fn vector(&self, token: &str) -> Option<Cow<'_, [f32]>> {
        let i = *self.index.get(token)?;
        let mut v = vec![0.0; self.index.len()];
        v[i] = 1.0;
        Some(Cow::Owned(v))
    }

    fn exact_only(&self) -> bool {
        true
    }
}
