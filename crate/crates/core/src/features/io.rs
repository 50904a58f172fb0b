//! Feature file formats.
//!
//! Binary matrix: 8-byte magic, `u32` version, `u64` n, `u64` d, `u8` kind,
//! then row-major little-endian `f32`. Row ids live in a sibling
//! `<file>.ids` manifest, one id per line.
//!
//! Embeddings JSONL: `{"id": str, "embedding": [float]}` per line.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureKind, FeatureMatrix, Result};
use crate::corpus::Corpus;

const MAGIC: &[u8; 8] = b"ENTCLFMX";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 1;

pub fn id_manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn save_matrix(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    let (n, d) = (fm.n(), fm.d());
    let mut buf = Vec::with_capacity(HEADER_LEN + n * d * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    buf.push(fm.kind().code());
    let v = fm.values();
    for i in 0..n {
        for j in 0..d {
            buf.extend_from_slice(&(v[(i, j)] as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(io_err(path))?;
    let mut ids = fm.ids().join("\n");
    if !ids.is_empty() {
        ids.push('\n');
    }
    let manifest = id_manifest_path(path);
    fs::write(&manifest, ids).map_err(io_err(&manifest))
}

pub fn load_matrix(path: &Path) -> Result<FeatureMatrix> {
    let raw = fs::read(path).map_err(io_err(path))?;
    let bad = |message: String| FeatureError::Format {
        path: path.to_owned(),
        message,
    };
    if raw.len() < HEADER_LEN || &raw[..8] != MAGIC {
        return Err(bad("missing header".into()));
    }
    let version = u32::from_le_bytes(raw[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(raw[12..20].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(raw[20..28].try_into().unwrap()) as usize;
    let kind =
        FeatureKind::from_code(raw[28]).ok_or_else(|| bad(format!("unknown kind {}", raw[28])))?;
    let expected = n.checked_mul(d).and_then(|x| x.checked_mul(4));
    if expected != Some(raw.len() - HEADER_LEN) {
        return Err(bad(format!("body length does not match {n} x {d}")));
    }
    let body = &raw[HEADER_LEN..];
    let values = DMatrix::from_fn(n, d, |i, j| {
        let at = (i * d + j) * 4;
        f64::from(f32::from_le_bytes(body[at..at + 4].try_into().unwrap()))
    });
    let manifest = id_manifest_path(path);
    let ids: Vec<String> = fs::read_to_string(&manifest)
        .map_err(io_err(&manifest))?
        .lines()
        .map(str::to_owned)
        .collect();
    FeatureMatrix::new(kind, ids, values)
}

#[derive(Serialize, Deserialize)]
pub(crate) struct EmbeddingRecord {
    pub id: String,
    pub embedding: Vec<f64>,
}

pub(crate) fn read_embedding_records(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(line).map_err(|e| FeatureError::Malformed {
                path: path.to_owned(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads document embeddings and aligns them to corpus order.
///
/// Every corpus id needs a record; records for ids outside the corpus are
/// ignored. A later record for the same id replaces an earlier one.
pub fn load_embeddings(path: &Path, corpus: &Corpus) -> Result<FeatureMatrix> {
    let records = read_embedding_records(path)?;
    let mut dim = None;
    let mut by_id: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, rec) in records.into_iter().enumerate() {
        if rec.embedding.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite { id: rec.id });
        }
        let expected = *dim.get_or_insert(rec.embedding.len());
        if rec.embedding.len() != expected {
            return Err(FeatureError::DimensionMismatch {
                id: rec.id,
                record: i + 1,
                expected,
                found: rec.embedding.len(),
            });
        }
        by_id.insert(rec.id, rec.embedding);
    }
    let missing: Vec<String> = corpus
        .docs()
        .iter()
        .filter(|d| !by_id.contains_key(&d.id))
        .map(|d| d.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(FeatureError::MissingIds(missing));
    }
    let d = dim.unwrap_or(0);
    let values = DMatrix::from_fn(corpus.len(), d, |i, j| by_id[&corpus.docs()[i].id][j]);
    FeatureMatrix::new(FeatureKind::Llm, corpus.ids(), values)
}

/// Writes rows as embeddings JSONL in matrix order.
pub fn save_embeddings_jsonl(fm: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, id) in fm.ids().iter().enumerate() {
        let rec = EmbeddingRecord {
            id: id.clone(),
            embedding: fm.values().row(i).iter().copied().collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("finite floats serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
