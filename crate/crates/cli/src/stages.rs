//! One function per pipeline stage. Every stage reads its inputs from files
//! and writes its outputs to files, so subcommands and the pipeline share
//! the same code and cached runs see exactly what fresh runs see.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use entclust::corpus::{
    default_stopwords, entity_token, load_corpus, load_entities, load_stopwords, save_corpus_jsonl,
    save_entities_jsonl, Corpus, CorpusFormat, EntityTable, StopwordList,
};
use entclust::features::{
    build_bow, fetch_embeddings, load_embeddings, load_matrix, save_embeddings_jsonl, save_matrix,
    EmbedClientConfig, FeatureKind, FeatureMatrix,
};
use entclust::gcc::{embed, fit_gcc, GccConfig, GccResult};
use entclust::graph::{
    build_knn_graph, build_ner_graph, find_matches, graph_stats, DocGraph, EntityMatch,
    GraphConfig, GraphStats,
};
use entclust::metrics::{score_all, Scores};
use entclust::propagation::{build_propagator, propagate};
use entclust::selection::{
    default_oversegmentation, internal_indices, oversegment, suggest_k, sweep_p, ward_linkage,
    Dendrogram, InternalIndices, KSuggestion, PSweepResult,
};
use entclust::w2v::{
    load_vectors, save_vectors, train_cbow, ExactMatchVectors, TokenVectors, W2vConfig,
};
use serde::Serialize;

use crate::config::{BowSettings, FeatureSource};
use crate::error::{CliError, Result};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "{what} file not found: {}",
            path.display()
        )))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

/// `english`, `french`, `none`, or a stopword file path.
pub fn stopword_set(setting: &str) -> Result<HashSet<String>> {
    Ok(match setting {
        "english" => default_stopwords(StopwordList::English),
        "french" => default_stopwords(StopwordList::French),
        "none" => default_stopwords(StopwordList::None),
        path => load_stopwords(Path::new(path))?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub flagged: usize,
    pub entities: usize,
    pub skipped_unknown: usize,
}

/// Loads and tokenizes the corpus, merging each document's multi-word
/// entities into single tokens. Writes the tokenized corpus and, when given,
/// the entity table joined to the corpus.
pub fn ingest(
    corpus_path: &Path,
    entities_path: Option<&Path>,
    stopwords: &str,
    out_corpus: &Path,
    out_entities: Option<&Path>,
) -> Result<IngestSummary> {
    let mut corpus = load_corpus(corpus_path, CorpusFormat::Jsonl)?;
    let entities = entities_path
        .map(|p| load_entities(p, &corpus))
        .transpose()?;
    corpus.tokenize_all(&stopword_set(stopwords)?, entities.as_ref());
    let flagged = corpus.flagged().len();
    if flagged > 0 {
        tracing::warn!(flagged, "documents have no tokens after preprocessing");
    }
    save_corpus_jsonl(&corpus, out_corpus)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out_corpus.display())))?;
    if let (Some(t), Some(out)) = (&entities, out_entities) {
        save_entities_jsonl(t, out)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(IngestSummary {
        documents: corpus.len(),
        flagged,
        entities: entities.as_ref().map_or(0, EntityTable::total_entities),
        skipped_unknown: entities.as_ref().map_or(0, |t| t.skipped_unknown),
    })
}

pub fn load_tokenized(path: &Path) -> Result<Corpus> {
    Ok(load_corpus(path, CorpusFormat::Jsonl)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct EntitySummary {
    pub documents: usize,
    pub with_entities: usize,
    pub total: usize,
    pub per_type: std::collections::BTreeMap<String, usize>,
    pub skipped_unknown: usize,
}

/// Validates an entity file against a corpus and optionally writes the
/// normalized table.
pub fn check_entities(
    corpus_path: &Path,
    entities_path: &Path,
    out: Option<&Path>,
) -> Result<EntitySummary> {
    let corpus = load_corpus(corpus_path, CorpusFormat::Jsonl)?;
    let table = load_entities(entities_path, &corpus)?;
    let mut per_type = std::collections::BTreeMap::new();
    for a in &table.per_doc {
        for (ty, list) in &a.entities {
            *per_type.entry(ty.clone()).or_insert(0) += list.len();
        }
    }
    if let Some(out) = out {
        save_entities_jsonl(&table, out)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(EntitySummary {
        documents: corpus.len(),
        with_entities: table.per_doc.iter().filter(|a| !a.is_empty()).count(),
        total: table.total_entities(),
        per_type,
        skipped_unknown: table.skipped_unknown,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct W2vSummary {
    pub vocabulary: usize,
    pub dim: usize,
    pub epoch_losses: Vec<f64>,
}

pub fn train_w2v(corpus_path: &Path, cfg: &W2vConfig, out: &Path) -> Result<W2vSummary> {
    let corpus = load_tokenized(corpus_path)?;
    let model = train_cbow(&corpus, cfg)?;
    save_vectors(&model.vectors, out)?;
    Ok(W2vSummary {
        vocabulary: model.vectors.len(),
        dim: cfg.dim,
        epoch_losses: model.epoch_losses,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchSummary {
    pub matches: usize,
    pub occurrences: usize,
    pub missing_vectors: usize,
    pub coverage: f64,
}

/// Finds entity matches between documents. `vectors = None` compares
/// normalized surfaces exactly.
pub fn match_entities(
    corpus_path: &Path,
    entities_path: &Path,
    vectors: Option<&Path>,
    cfg: &GraphConfig,
    out: &Path,
) -> Result<MatchSummary> {
    require(entities_path, "entities")?;
    let corpus = load_corpus(corpus_path, CorpusFormat::Jsonl)?;
    let table = load_entities(entities_path, &corpus)?;
    let exact;
    let trained;
    let vecs: &dyn TokenVectors = match vectors {
        Some(p) => {
            trained = load_vectors(p)?;
            &trained
        }
        None => {
            exact = ExactMatchVectors::new(
                table
                    .per_doc
                    .iter()
                    .flat_map(|a| a.surfaces().filter_map(entity_token).collect::<Vec<_>>()),
            );
            &exact
        }
    };
    let report = find_matches(&table, vecs, cfg)?;
    let file = fs::File::create(out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    for m in &report.matches {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(MatchSummary {
        matches: report.matches.len(),
        occurrences: report.occurrences,
        missing_vectors: report.missing_vectors,
        coverage: report.coverage(),
    })
}

pub fn read_matches(path: &Path) -> Result<Vec<EntityMatch>> {
    read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::data(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn build_graph(
    matches_path: &Path,
    n: usize,
    cfg: &GraphConfig,
    out: &Path,
) -> Result<GraphStats> {
    let matches = read_matches(matches_path)?;
    let g = build_ner_graph(&matches, cfg, n)?;
    g.save(out)?;
    Ok(graph_stats(&g))
}

pub fn knn_graph(features_path: &Path, k: usize, out: &Path) -> Result<GraphStats> {
    let fm = load_matrix(features_path)?;
    let g = build_knn_graph(&fm, k)?;
    g.save(out)?;
    Ok(graph_stats(&g))
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureSummary {
    pub rows: usize,
    pub dim: usize,
    pub kind: FeatureKind,
}

pub fn build_features(
    source: FeatureSource,
    corpus_path: &Path,
    embeddings: Option<&Path>,
    bow: &BowSettings,
    out: &Path,
) -> Result<FeatureSummary> {
    let corpus = load_tokenized(corpus_path)?;
    let fm = match source {
        FeatureSource::Bow => build_bow(&corpus, bow.max_features, bow.weighting)?.0,
        FeatureSource::Llm => {
            let path = embeddings
                .ok_or_else(|| CliError::config("llm features need an embeddings file"))?;
            require(path, "embeddings")?;
            load_embeddings(path, &corpus)?
        }
    };
    save_matrix(&fm, out)?;
    Ok(FeatureSummary {
        rows: fm.n(),
        dim: fm.d(),
        kind: fm.kind(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FetchSummary {
    pub rows: usize,
    pub excluded: Vec<String>,
    pub requests: usize,
}

pub fn fetch(corpus_path: &Path, cfg: &EmbedClientConfig, out: &Path) -> Result<FetchSummary> {
    let corpus = load_corpus(corpus_path, CorpusFormat::Jsonl)?;
    let outcome = fetch_embeddings(&corpus, cfg)?;
    save_embeddings_jsonl(&outcome.matrix, out)?;
    Ok(FetchSummary {
        rows: outcome.matrix.n(),
        excluded: outcome.excluded,
        requests: outcome.requests,
    })
}

pub fn propagate_file(
    graph_path: &Path,
    features_path: &Path,
    p: usize,
    out: &Path,
) -> Result<FeatureSummary> {
    let g = DocGraph::load(graph_path)?;
    let fm = load_matrix(features_path)?;
    let y = propagate(&build_propagator(&g), &fm, p)?;
    save_matrix(&y, out)?;
    Ok(FeatureSummary {
        rows: y.n(),
        dim: y.d(),
        kind: y.kind(),
    })
}

/// Fits GCC on an already propagated matrix. Writes the result JSON and,
/// when asked, the `Y W` embedding.
pub fn fit_file(
    features_path: &Path,
    cfg: &GccConfig,
    out: &Path,
    embedding_out: Option<&Path>,
) -> Result<GccResult> {
    let fm = load_matrix(features_path)?;
    let state = fit_gcc(fm.values(), cfg)?;
    let result = state.to_result(cfg.p, cfg.seed);
    write_json(out, &result)?;
    if let Some(path) = embedding_out {
        let z = FeatureMatrix::new(
            FeatureKind::Embedding,
            fm.ids().to_vec(),
            embed(fm.values(), &state.projection),
        )?;
        save_matrix(&z, path)?;
    }
    Ok(result)
}

pub fn read_result(path: &Path) -> Result<GccResult> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Reference labels from either a JSON array of integers or a corpus file
/// whose every record carries a `label`.
pub fn read_truth(path: &Path) -> Result<Vec<usize>> {
    let text = read_file(path)?;
    if let Ok(labels) = serde_json::from_str::<Vec<usize>>(&text) {
        return Ok(labels);
    }
    let corpus = load_corpus(path, CorpusFormat::Jsonl)?;
    corpus
        .labels()
        .ok_or_else(|| CliError::data(format!("{} does not label every document", path.display())))
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Scores> {
    Ok(score_all(pred, truth)?)
}

/// Metrics JSON with four decimals.
pub fn metrics_json(s: &Scores) -> String {
    format!(
        "{{\n  \"acc\": {:.4},\n  \"nmi\": {:.4},\n  \"ari\": {:.4}\n}}\n",
        s.acc, s.nmi, s.ari
    )
}

/// Table with ACC / NMI / ARI columns, as fractions or percentages.
pub fn metrics_table(s: &Scores, percent: bool) -> String {
    let scale = if percent { 100.0 } else { 1.0 };
    let digits = if percent { 2 } else { 4 };
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:<8} {:<8}", "ACC", "NMI", "ARI");
    let _ = writeln!(
        out,
        "{:<8.d$} {:<8.d$} {:<8.d$}",
        s.acc * scale,
        s.nmi * scale,
        s.ari * scale,
        d = digits
    );
    out
}

pub fn indices_for(features_path: &Path, labels: &[usize]) -> Result<InternalIndices> {
    let fm = load_matrix(features_path)?;
    if fm.n() != labels.len() {
        return Err(CliError::data(format!(
            "{} feature rows vs {} predicted labels",
            fm.n(),
            labels.len()
        )));
    }
    Ok(internal_indices(fm.values(), labels))
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectKReport {
    pub m: usize,
    pub dropped_empty: usize,
    pub suggestions: Vec<KSuggestion>,
}

/// Over-segments the propagated features, builds the Ward dendrogram of the
/// centroids and ranks candidate cuts. Writes `dendrogram.json` and
/// `k_suggestions.json` into `out_dir`.
pub fn select_k(
    features_path: &Path,
    m: Option<usize>,
    cfg: &GccConfig,
    k_range: (usize, usize),
    out_dir: &Path,
) -> Result<(SelectKReport, Dendrogram)> {
    let fm = load_matrix(features_path)?;
    let m = m.unwrap_or_else(|| default_oversegmentation(fm.n(), fm.d()));
    let seg = oversegment(fm.values(), m, cfg)?;
    let dendro = ward_linkage(&seg.centroids);
    let report = SelectKReport {
        m,
        dropped_empty: seg.dropped,
        suggestions: suggest_k(&dendro, k_range.0, k_range.1),
    };
    write_json(&out_dir.join("dendrogram.json"), &dendro)?;
    write_json(&out_dir.join("k_suggestions.json"), &report)?;
    Ok((report, dendro))
}

/// Sweeps `p` and writes `p_sweep.csv` and `p_sweep.json` into `out_dir`.
pub fn select_p(
    graph_path: &Path,
    features_path: &Path,
    k: usize,
    p_range: (usize, usize),
    cfg: &GccConfig,
    out_dir: &Path,
) -> Result<PSweepResult> {
    let g = DocGraph::load(graph_path)?;
    let fm = load_matrix(features_path)?;
    let res = sweep_p(&build_propagator(&g), &fm, k, p_range.0..=p_range.1, cfg)?;
    write_file(&out_dir.join("p_sweep.csv"), res.to_csv())?;
    write_json(&out_dir.join("p_sweep.json"), &res)?;
    Ok(res)
}
