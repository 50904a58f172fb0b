//! Document collection, tokenization and named-entity annotations.
//!
//! The corpus file is JSONL with one `{"id", "text", "label"?}` object per
//! line. Entity annotations come from a separate JSON or JSONL file of
//! `{"doc_id", "entities": {type: [surface, ...]}}` records produced by an
//! external NER step.

mod tokenize;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tokenize::{entity_token, normalize_words, tokenize, EntityMerger};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("empty corpus")]
    Empty,
    #[error("empty vocabulary: no token reaches min_count = {min_count}")]
    EmptyVocabulary { min_count: u64 },
    #[error("unknown document id {0:?}")]
    UnknownId(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<usize>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            tokens: Vec::new(),
            label,
        }
    }

    /// True when tokenization left nothing; such documents stay graph nodes
    /// but contribute no Word2Vec training windows.
    pub fn is_flagged(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Ordered, id-unique collection of documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Document>", into = "Vec<Document>")]
pub struct Corpus {
    docs: Vec<Document>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<Document>> for Corpus {
    type Error = CorpusError;

    fn try_from(docs: Vec<Document>) -> Result<Self> {
        Corpus::from_documents(docs)
    }
}

impl From<Corpus> for Vec<Document> {
    fn from(c: Corpus) -> Self {
        c.docs
    }
}

#[derive(Deserialize)]
struct CorpusRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<usize>,
    #[serde(default)]
    tokens: Vec<String>,
}

impl Corpus {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if index.insert(doc.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self { docs, index })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, i: usize) -> Option<&Document> {
        self.docs.get(i)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.id.clone()).collect()
    }

    /// Ground-truth labels, present only when every document carries one.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.docs.iter().map(|d| d.label).collect()
    }

    /// Number of distinct ground-truth labels.
    pub fn num_classes(&self) -> usize {
        self.docs
            .iter()
            .filter_map(|d| d.label)
            .collect::<HashSet<_>>()
            .len()
    }

    /// Ids of documents whose token stream is empty.
    pub fn flagged(&self) -> Vec<&str> {
        self.docs
            .iter()
            .filter(|d| d.is_flagged())
            .map(|d| d.id.as_str())
            .collect()
    }

    /// Tokenizes every document in parallel, merging the document's own
    /// multi-word entity surfaces.
    pub fn tokenize_all(&mut self, stopwords: &HashSet<String>, entities: Option<&EntityTable>) {
        let empty = EntityAnnotation::default();
        let docs = std::mem::take(&mut self.docs);
        self.docs = docs
            .into_par_iter()
            .enumerate()
            .map(|(i, mut doc)| {
                let ann = entities.map_or(&empty, |t| &t.per_doc[i]);
                let merger = EntityMerger::new(ann.surfaces());
                doc.tokens = tokenize::tokenize_with(&doc.text, stopwords, &merger);
                doc
            })
            .collect();
    }

    /// Restricts the corpus to documents whose id is not in `drop`, keeping
    /// the original relative order.
    pub fn without(&self, drop: &HashSet<String>) -> Corpus {
        let docs = self
            .docs
            .iter()
            .filter(|d| !drop.contains(&d.id))
            .cloned()
            .collect();
        Corpus::from_documents(docs).expect("subset of a valid corpus")
    }
}

/// Reads a corpus file. Document order equals line order; blank lines are
/// ignored.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let CorpusFormat::Jsonl = format;
    let raw = read(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            path: path.to_owned(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let mut doc = Document::new(rec.id, rec.text, rec.label);
        doc.tokens = rec.tokens;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(CorpusError::Empty);
    }
    Corpus::from_documents(docs)
}

/// Writes one JSON object per document. Tokens are included when present,
/// so a tokenized corpus reloads without re-tokenizing.
pub fn save_corpus_jsonl(corpus: &Corpus, path: &Path) -> io::Result<()> {
    let mut out = String::new();
    for d in corpus.docs() {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), d.id.clone().into());
        obj.insert("text".into(), d.text.clone().into());
        if let Some(l) = d.label {
            obj.insert("label".into(), l.into());
        }
        if !d.tokens.is_empty() {
            obj.insert("tokens".into(), d.tokens.clone().into());
        }
        out.push_str(&serde_json::Value::Object(obj).to_string());
        out.push('\n');
    }
    fs::write(path, out)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Named entities detected in one document, keyed by entity type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub doc_id: String,
    pub entities: BTreeMap<String, Vec<String>>,
}

impl EntityAnnotation {
    /// Builds an annotation, trimming surfaces, dropping empty ones and
    /// deduplicating within each type while keeping first-seen order.
    pub fn new(doc_id: impl Into<String>, raw: BTreeMap<String, Vec<String>>) -> Self {
        let entities = raw
            .into_iter()
            .map(|(ty, list)| {
                let mut seen = HashSet::new();
                let list: Vec<String> = list
                    .into_iter()
                    .map(|s| s.trim().to_owned())
                    .filter(|s| !s.is_empty() && seen.insert(s.clone()))
                    .collect();
                (ty, list)
            })
            .filter(|(_, list)| !list.is_empty())
            .collect();
        Self {
            doc_id: doc_id.into(),
            entities,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.entities.values().flatten().map(String::as_str)
    }
}

/// Entity annotations aligned to corpus order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityTable {
    pub per_doc: Vec<EntityAnnotation>,
    /// Records that referenced a document id absent from the corpus.
    pub skipped_unknown: usize,
}

impl EntityTable {
    pub fn empty_for(corpus: &Corpus) -> Self {
        Self {
            per_doc: corpus
                .docs()
                .iter()
                .map(|d| EntityAnnotation {
                    doc_id: d.id.clone(),
                    entities: BTreeMap::new(),
                })
                .collect(),
            skipped_unknown: 0,
        }
    }

    pub fn total_entities(&self) -> usize {
        self.per_doc.iter().map(EntityAnnotation::len).sum()
    }

    /// Keeps only the rows of documents still present in `corpus`.
    pub fn restrict_to(&self, corpus: &Corpus) -> EntityTable {
        let by_id: HashMap<&str, &EntityAnnotation> = self
            .per_doc
            .iter()
            .map(|a| (a.doc_id.as_str(), a))
            .collect();
        EntityTable {
            per_doc: corpus
                .docs()
                .iter()
                .map(|d| {
                    by_id.get(d.id.as_str()).map_or_else(
                        || EntityAnnotation {
                            doc_id: d.id.clone(),
                            entities: BTreeMap::new(),
                        },
                        |a| (*a).clone(),
                    )
                })
                .collect(),
            skipped_unknown: self.skipped_unknown,
        }
    }
}

#[derive(Deserialize)]
struct EntityRecord {
    doc_id: String,
    entities: BTreeMap<String, Vec<String>>,
}

/// Loads entity annotations and joins them to `corpus`.
///
/// Accepts a JSON array of records or JSONL. Records for unknown ids are
/// skipped with a warning; repeated records for the same id are merged.
pub fn load_entities(path: &Path, corpus: &Corpus) -> Result<EntityTable> {
    let raw = read(path)?;
    let records: Vec<(usize, EntityRecord)> = if raw.trim_start().starts_with('[') {
        let recs: Vec<EntityRecord> =
            serde_json::from_str(&raw).map_err(|e| CorpusError::Malformed {
                path: path.to_owned(),
                line: e.line(),
                message: e.to_string(),
            })?;
        recs.into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect()
    } else {
        let mut out = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: EntityRecord =
                serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            out.push((lineno + 1, rec));
        }
        out
    };

    let mut merged: Vec<BTreeMap<String, Vec<String>>> = vec![BTreeMap::new(); corpus.len()];
    let mut skipped = 0;
    for (line, rec) in records {
        let Some(pos) = corpus.position(&rec.doc_id) else {
            tracing::warn!(doc_id = %rec.doc_id, line, "entity record for unknown document skipped");
            skipped += 1;
            continue;
        };
        for (ty, list) in rec.entities {
            merged[pos].entry(ty).or_default().extend(list);
        }
    }
    let per_doc = corpus
        .docs()
        .iter()
        .zip(merged)
        .map(|(d, raw)| EntityAnnotation::new(d.id.clone(), raw))
        .collect();
    Ok(EntityTable {
        per_doc,
        skipped_unknown: skipped,
    })
}

pub fn save_entities_jsonl(table: &EntityTable, path: &Path) -> io::Result<()> {
    let mut out = String::new();
    for a in &table.per_doc {
        out.push_str(&serde_json::to_string(a).map_err(io::Error::other)?);
        out.push('\n');
    }
    fs::write(path, out)
}

/// Token-to-index map with corpus frequencies. Index 0 is the most frequent
/// token; ties are ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabParts", into = "VocabParts")]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabParts {
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabParts> for Vocabulary {
    fn from(p: VocabParts) -> Self {
        Vocabulary::from_parts(p.tokens, p.counts)
    }
}

impl From<Vocabulary> for VocabParts {
    fn from(v: Vocabulary) -> Self {
        VocabParts {
            tokens: v.tokens,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Assembles a vocabulary from parallel token/count lists, preserving
    /// the given order as the index order.
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        assert_eq!(tokens.len(), counts.len());
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Corpus-wide token frequencies, sorted by descending count then token.
pub(crate) fn token_frequencies(corpus: &Corpus) -> Vec<(String, u64)> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for doc in corpus.docs() {
        for t in &doc.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut items: Vec<(String, u64)> = freq.into_iter().map(|(t, c)| (t.to_owned(), c)).collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items
}

pub fn build_vocabulary(corpus: &Corpus, min_count: u64) -> Result<Vocabulary> {
    let (tokens, counts): (Vec<_>, Vec<_>) = token_frequencies(corpus)
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .unzip();
    if tokens.is_empty() {
        return Err(CorpusError::EmptyVocabulary { min_count });
    }
    Ok(Vocabulary::from_parts(tokens, counts))
}

/// Built-in stopword lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopwordList {
    English,
    French,
    None,
}

const STOPWORDS_EN: &str = include_str!("../../data/stopwords_en.txt");
const STOPWORDS_FR: &str = include_str!("../../data/stopwords_fr.txt");

pub fn default_stopwords(list: StopwordList) -> HashSet<String> {
    match list {
        StopwordList::English => parse_stopwords(STOPWORDS_EN),
        StopwordList::French => parse_stopwords(STOPWORDS_FR),
        StopwordList::None => HashSet::new(),
    }
}

/// Reads a stopword file with one token per line.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    Ok(parse_stopwords(&read(path)?))
}

fn parse_stopwords(raw: &str) -> HashSet<String> {
    raw.lines().flat_map(normalize_words).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn corpus_of(texts: &[&str]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut d = Document::new(format!("d{i}"), *t, None);
                d.tokens = normalize_words(t);
                d
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn preserves_file_order() {
        let f = write_tmp(
            "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\"text\":\"y\",\"label\":1}\n{\"id\":\"c\",\"text\":\"z\"}\n",
        );
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.ids(), vec!["a", "b", "c"]);
        assert_eq!(c.get(1).unwrap().label, Some(1));
        assert_eq!(c.labels(), None);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("\n");
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"id\":\"a\",\"text\":\"x\"}\nnot json\n");
        match load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let f = write_tmp("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("\"a\""), "{err}");
    }

    #[test]
    fn entities_join_and_dedupe() {
        let c = corpus_of(&["Kylian Mbappé joined PSG", "nothing here"]);
        let f = write_tmp(concat!(
            "{\"doc_id\":\"d0\",\"entities\":{\"PER\":[\"Kylian Mbappé\"],\"ORG\":[\"PSG\",\"PSG\"]}}\n",
            "{\"doc_id\":\"zz\",\"entities\":{\"PER\":[\"Nobody\"]}}\n",
        ));
        let t = load_entities(f.path(), &c).unwrap();
        assert_eq!(t.skipped_unknown, 1);
        assert_eq!(t.per_doc[0].len(), 2);
        assert_eq!(t.per_doc[0].entities["ORG"], vec!["PSG"]);
        assert!(t.per_doc[1].is_empty());
        assert_eq!(t.per_doc[1].doc_id, "d1");
    }

    #[test]
    fn entities_accept_json_array() {
        let c = corpus_of(&["a"]);
        let f = write_tmp("[{\"doc_id\":\"d0\",\"entities\":{\"LOC\":[\"Paris\", \" \"]}}]");
        let t = load_entities(f.path(), &c).unwrap();
        assert_eq!(t.per_doc[0].entities["LOC"], vec!["Paris"]);
    }

    #[test]
    fn malformed_entities_error() {
        let c = corpus_of(&["a"]);
        let f = write_tmp("{\"doc_id\": 3}\n");
        assert!(matches!(
            load_entities(f.path(), &c),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn tokenize_all_merges_per_document_entities() {
        let mut c = corpus_of(&["Kylian Mbappé scored for PSG", "it is the and of it"]);
        let mut ents = EntityTable::empty_for(&c);
        ents.per_doc[0]
            .entities
            .insert("PER".into(), vec!["Kylian Mbappé".into()]);
        c.tokenize_all(&default_stopwords(StopwordList::English), Some(&ents));
        assert_eq!(c.docs()[0].tokens, vec!["kylian_mbappé", "scored", "psg"]);
        assert_eq!(c.flagged(), vec!["d1"]);
    }

    #[test]
    fn vocabulary_orders_by_frequency_then_token() {
        let c = corpus_of(&["b a c a b a"]);
        let v = build_vocabulary(&c, 1).unwrap();
        assert_eq!(v.tokens(), &["a", "b", "c"]);
        assert_eq!(v.counts(), &[3, 2, 1]);
        assert_eq!(v.index_of("c"), Some(2));
    }

    #[test]
    fn vocabulary_min_count_filters() {
        let text = std::iter::repeat_n("x", 10).chain(std::iter::repeat_n("y", 9));
        let c = corpus_of(&[&text.collect::<Vec<_>>().join(" ")]);
        let v = build_vocabulary(&c, 10).unwrap();
        assert_eq!(v.tokens(), &["x"]);
        assert!(matches!(
            build_vocabulary(&c, 11),
            Err(CorpusError::EmptyVocabulary { min_count: 11 })
        ));
    }

    #[test]
    fn vocabulary_indices_are_a_bijection() {
        let c = corpus_of(&["q w e r t y q w e q"]);
        let v = build_vocabulary(&c, 1).unwrap();
        let mut seen: Vec<usize> = v.tokens().iter().map(|t| v.index_of(t).unwrap()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..v.len()).collect::<Vec<_>>());
    }

    #[test]
    fn corpus_serde_rebuilds_index() {
        let c = corpus_of(&["a", "b"]);
        let json = serde_json::to_string(&c).unwrap();
        let back: Corpus = serde_json::from_str(&json).unwrap();
        assert_eq!(back.position("d1"), Some(1));
        assert_eq!(back, c);
    }

    #[test]
    fn default_stopword_lists_load() {
        assert!(default_stopwords(StopwordList::English).contains("the"));
        assert!(default_stopwords(StopwordList::French).contains("les"));
    }
}
