//! Client for an OpenAI-style embeddings endpoint.
//!
//! `POST {base_url}/embeddings` with `{"model", "input": [..]}` and a bearer
//! token; the response carries `{"data": [{"index", "embedding"}]}`. Results
//! are cached as embeddings JSONL so reruns need no network.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::io::{read_embedding_records, EmbeddingRecord};
use super::{FeatureError, FeatureKind, FeatureMatrix, Result};
use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedClientConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. `None` sends
    /// no Authorization header (local endpoints).
    pub api_key_env: Option<String>,
    pub max_tokens_per_doc: usize,
    pub batch_size: usize,
    pub max_attempts: usize,
    pub backoff_ms: u64,
    pub parallel_requests: usize,
    pub timeout_secs: u64,
    pub cache_path: Option<PathBuf>,
}

impl Default for EmbedClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            max_tokens_per_doc: 8191,
            batch_size: 64,
            max_attempts: 5,
            backoff_ms: 500,
            parallel_requests: 4,
            timeout_secs: 120,
            cache_path: None,
        }
    }
}

impl EmbedClientConfig {
    fn validate(&self) -> Result<()> {
        if self.max_tokens_per_doc == 0 || self.batch_size == 0 {
            return Err(FeatureError::Config(
                "max_tokens_per_doc and batch_size must be >= 1".into(),
            ));
        }
        if self.max_attempts == 0 || self.parallel_requests == 0 {
            return Err(FeatureError::Config(
                "max_attempts and parallel_requests must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Approximate token count: whitespace-separated pieces of the raw text.
/// The remote tokenizer is not available locally.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone)]
pub struct FetchOutcome {
    /// Rows for the kept documents, in corpus order.
    pub matrix: FeatureMatrix,
    /// Ids dropped for exceeding `max_tokens_per_doc`.
    pub excluded: Vec<String>,
    /// Number of HTTP requests that succeeded during this call.
    pub requests: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    index: usize,
    embedding: Vec<f64>,
}

fn post_batch(
    agent: &ureq::Agent,
    url: &str,
    auth: Option<&str>,
    model: &str,
    texts: &[&str],
    cfg: &EmbedClientConfig,
) -> Result<Vec<Vec<f64>>> {
    let body = EmbedRequest {
        model,
        input: texts.to_vec(),
    };
    let mut last = String::new();
    for attempt in 0..cfg.max_attempts {
        if attempt > 0 {
            let wait = cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
            std::thread::sleep(Duration::from_millis(wait));
        }
        let mut req = agent.post(url);
        if let Some(key) = auth {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let parsed = req
            .send_json(&body)
            .and_then(|mut resp| resp.body_mut().read_json::<EmbedResponse>());
        match parsed {
            Ok(resp) => return order_by_index(resp, texts.len()),
            Err(e) => {
                tracing::warn!(attempt = attempt + 1, error = %e, "embedding request failed");
                last = e.to_string();
            }
        }
    }
    Err(FeatureError::Http {
        attempts: cfg.max_attempts,
        message: last,
    })
}

/// Places each returned embedding at its `index`; the index set must be
/// exactly `0..expected`.
fn order_by_index(resp: EmbedResponse, expected: usize) -> Result<Vec<Vec<f64>>> {
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for d in resp.data {
        match slots.get_mut(d.index) {
            Some(slot @ None) => *slot = Some(d.embedding),
            Some(Some(_)) => {
                return Err(FeatureError::ResponseIndex {
                    message: format!("duplicate index {}", d.index),
                })
            }
            None => {
                return Err(FeatureError::ResponseIndex {
                    message: format!("index {} out of range 0..{expected}", d.index),
                })
            }
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| FeatureError::ResponseIndex {
                message: format!("index {i} missing"),
            })
        })
        .collect()
}

fn read_cache(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    Ok(read_embedding_records(path)?
        .into_iter()
        .map(|r| (r.id, r.embedding))
        .collect())
}

fn write_cache(path: &Path, corpus: &Corpus, got: &HashMap<String, Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    for d in corpus.docs() {
        if let Some(e) = got.get(&d.id) {
            let rec = EmbeddingRecord {
                id: d.id.clone(),
                embedding: e.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("finite floats serialize"));
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|source| FeatureError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Fetches embeddings for every document short enough for the model.
///
/// Documents over `max_tokens_per_doc` are excluded and reported; the
/// caller should drop them from the corpus for downstream stages. Cached
/// ids are not re-requested.
pub fn fetch_embeddings(corpus: &Corpus, cfg: &EmbedClientConfig) -> Result<FetchOutcome> {
    cfg.validate()?;
    let excluded: Vec<String> = corpus
        .docs()
        .iter()
        .filter(|d| whitespace_token_count(&d.text) > cfg.max_tokens_per_doc)
        .map(|d| d.id.clone())
        .collect();
    if !excluded.is_empty() {
        tracing::warn!(
            count = excluded.len(),
            "documents exceed the token limit and are excluded"
        );
    }
    let kept = corpus.without(&excluded.iter().cloned().collect::<HashSet<_>>());

    let mut got = match &cfg.cache_path {
        Some(p) => read_cache(p)?,
        None => HashMap::new(),
    };
    let todo: Vec<usize> = (0..kept.len())
        .filter(|&i| !got.contains_key(&kept.docs()[i].id))
        .collect();

    let mut requests = 0;
    if !todo.is_empty() {
        let key = match &cfg.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| FeatureError::ApiKeyMissing(var.clone()))?)
            }
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        let url = format!("{}/embeddings", cfg.base_url.trim_end_matches('/'));
        let batches: Vec<&[usize]> = todo.chunks(cfg.batch_size).collect();
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, Vec<Vec<f64>>)>> = Mutex::new(Vec::new());
        let first_err: Mutex<Option<FeatureError>> = Mutex::new(None);
        std::thread::scope(|s| {
            for _ in 0..cfg.parallel_requests.min(batches.len()) {
                s.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= batches.len() || first_err.lock().unwrap().is_some() {
                        break;
                    }
                    let texts: Vec<&str> = batches[b]
                        .iter()
                        .map(|&i| kept.docs()[i].text.as_str())
                        .collect();
                    match post_batch(&agent, &url, key.as_deref(), &cfg.model, &texts, cfg) {
                        Ok(rows) => results.lock().unwrap().push((b, rows)),
                        Err(e) => {
                            first_err.lock().unwrap().get_or_insert(e);
                        }
                    }
                });
            }
        });
        let results = results.into_inner().unwrap();
        requests = results.len();
        for (b, rows) in results {
            for (&i, row) in batches[b].iter().zip(rows) {
                got.insert(kept.docs()[i].id.clone(), row);
            }
        }
        // keep whatever succeeded so a retry only fetches the remainder
        if let Some(p) = &cfg.cache_path {
            write_cache(p, &kept, &got)?;
        }
        if let Some(e) = first_err.into_inner().unwrap() {
            return Err(e);
        }
    }

    let dim = kept.docs().first().map_or(0, |d| got[&d.id].len());
    for (i, d) in kept.docs().iter().enumerate() {
        let row = &got[&d.id];
        if row.len() != dim {
            return Err(FeatureError::DimensionMismatch {
                id: d.id.clone(),
                record: i + 1,
                expected: dim,
                found: row.len(),
            });
        }
    }
    let values = DMatrix::from_fn(kept.len(), dim, |i, j| got[&kept.docs()[i].id][j]);
    Ok(FetchOutcome {
        matrix: FeatureMatrix::new(FeatureKind::Llm, kept.ids(), values)?,
        excluded,
        requests,
    })
}
