//! End-to-end run: ingest, Word2Vec, entity graph, features, propagation,
//! fit and evaluation, each stage cached on the hash of its inputs.

use std::path::{Path, PathBuf};

use entclust::features::id_manifest_path;
use entclust::graph::GraphKind;
use entclust::metrics::Scores;
use serde::Serialize;

use crate::cache::{StageCache, StageKey};
use crate::config::{EntityVectors, FeatureSource, PipelineConfig};
use crate::error::{CliError, Result};
use crate::stages;

pub const TOKENIZED: &str = "corpus.tok.jsonl";
pub const ENTITIES: &str = "entities.norm.jsonl";
pub const VECTORS: &str = "w2v.bin";
pub const MATCHES: &str = "matches.jsonl";
pub const GRAPH: &str = "graph.txt";
pub const FEATURES: &str = "features.fmx";
pub const PROPAGATED: &str = "propagated.fmx";
pub const RESULT: &str = "result.json";
pub const EMBEDDING: &str = "embedding.fmx";
pub const METRICS: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageReport>,
    pub result: PathBuf,
    pub metrics: Option<Scores>,
}

struct Runner {
    cache: StageCache,
    stages: Vec<StageReport>,
}

impl Runner {
    /// Runs `body` unless the cache says `outputs` are current for `key`.
    fn stage(
        &mut self,
        name: &str,
        key: impl FnOnce() -> Result<String>,
        outputs: &[PathBuf],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let key = key().map_err(|e| e.in_stage(name))?;
        let status = if self.cache.is_fresh(name, &key, outputs) {
            StageStatus::Cached
        } else {
            body().map_err(|e| e.in_stage(name))?;
            self.cache
                .record(name, &key, outputs)
                .map_err(|e| e.in_stage(name))?;
            StageStatus::Ran
        };
        tracing::info!(stage = name, ?status);
        self.stages.push(StageReport {
            stage: name.to_owned(),
            status,
        });
        Ok(())
    }
}

fn matrix_files(path: PathBuf) -> [PathBuf; 2] {
    let ids = id_manifest_path(&path);
    [path, ids]
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let cfg = config.resolved();
    cfg.validate()?;
    let corpus_src = cfg
        .paths
        .corpus
        .clone()
        .ok_or_else(|| CliError::config("paths.corpus is required"))?;
    let work = cfg.paths.workdir.clone();
    std::fs::create_dir_all(&work).map_err(|e| {
        CliError::config(format!("workdir {} is not writable: {e}", work.display()))
    })?;
    let at = |name: &str| work.join(name);
    let mut run = Runner {
        cache: StageCache::new(&work),
        stages: Vec::new(),
    };

    let entities_src = cfg.paths.entities.clone().filter(|p| p.exists());
    if let (Some(p), None) = (&cfg.paths.entities, &entities_src) {
        tracing::warn!(path = %p.display(), "entities file not found; tokenizing without entity merging");
    }

    // ingest
    let tokenized = at(TOKENIZED);
    let norm_entities = at(ENTITIES);
    let mut outputs = vec![tokenized.clone()];
    if entities_src.is_some() {
        outputs.push(norm_entities.clone());
    }
    let stopword_key = stopword_fingerprint(&cfg.stopwords);
    run.stage(
        "ingest",
        || {
            let mut k = StageKey::new("ingest")
                .file(&corpus_src)?
                .param(&stopword_key?);
            if let Some(e) = &entities_src {
                k = k.file(e)?;
            }
            Ok(k.finish())
        },
        &outputs,
        || {
            stages::ingest(
                &corpus_src,
                entities_src.as_deref(),
                &cfg.stopwords,
                &tokenized,
                entities_src.as_ref().map(|_| norm_entities.as_path()),
            )
            .map(|_| ())
        },
    )?;

    let features = at(FEATURES);
    let feature_outputs = matrix_files(features.clone());
    let embeddings = cfg.paths.embeddings.clone();
    let features_stage = |run: &mut Runner| {
        run.stage(
            "features",
            || {
                let mut k = StageKey::new("features")
                    .file(&tokenized)?
                    .param(&cfg.feature_kind)
                    .param(&cfg.bow);
                if cfg.feature_kind == FeatureSource::Llm {
                    let p = embeddings.as_ref().ok_or_else(|| {
                        CliError::config("feature_kind = llm needs paths.embeddings")
                    })?;
                    if !p.exists() {
                        return Err(CliError::data(format!(
                            "embeddings file not found: {}",
                            p.display()
                        )));
                    }
                    k = k.file(p)?;
                }
                Ok(k.finish())
            },
            &feature_outputs,
            || {
                stages::build_features(
                    cfg.feature_kind,
                    &tokenized,
                    embeddings.as_deref(),
                    &cfg.bow,
                    &features,
                )
                .map(|_| ())
            },
        )
    };

    let graph = at(GRAPH);
    match cfg.graph_kind {
        GraphKind::Ner => {
            let vectors = at(VECTORS);
            if cfg.entity_vectors == EntityVectors::W2v {
                run.stage(
                    "train-w2v",
                    || {
                        Ok(StageKey::new("train-w2v")
                            .file(&tokenized)?
                            .param(&cfg.w2v)
                            .finish())
                    },
                    std::slice::from_ref(&vectors),
                    || stages::train_w2v(&tokenized, &cfg.w2v, &vectors).map(|_| ()),
                )?;
            }
            let matches = at(MATCHES);
            let entity_path = || -> Result<&Path> {
                match (&cfg.paths.entities, &entities_src) {
                    (_, Some(_)) => Ok(&norm_entities),
                    (Some(p), None) => Err(CliError::data(format!(
                        "entities file not found: {}",
                        p.display()
                    ))),
                    (None, None) => Err(CliError::config("graph_kind = ner needs paths.entities")),
                }
            };
            let use_vectors = cfg.entity_vectors == EntityVectors::W2v;
            run.stage(
                "graph",
                || {
                    let mut k = StageKey::new("graph")
                        .file(&tokenized)?
                        .file(entity_path()?)?
                        .param(&cfg.graph)
                        .param(&cfg.entity_vectors);
                    if use_vectors {
                        k = k.file(&vectors)?;
                    }
                    Ok(k.finish())
                },
                &[matches.clone(), graph.clone()],
                || {
                    let n = stages::load_tokenized(&tokenized)?.len();
                    stages::match_entities(
                        &tokenized,
                        entity_path()?,
                        use_vectors.then_some(vectors.as_path()),
                        &cfg.graph,
                        &matches,
                    )?;
                    stages::build_graph(&matches, n, &cfg.graph, &graph).map(|_| ())
                },
            )?;
            features_stage(&mut run)?;
        }
        GraphKind::Knn => {
            features_stage(&mut run)?;
            run.stage(
                "graph",
                || {
                    Ok(StageKey::new("knn-graph")
                        .file(&features)?
                        .param(&cfg.knn)
                        .finish())
                },
                std::slice::from_ref(&graph),
                || stages::knn_graph(&features, cfg.knn.k, &graph).map(|_| ()),
            )?;
        }
    }

    let propagated = at(PROPAGATED);
    run.stage(
        "propagate",
        || {
            Ok(StageKey::new("propagate")
                .file(&graph)?
                .file(&features)?
                .param(&cfg.gcc.p)
                .finish())
        },
        &matrix_files(propagated.clone()),
        || stages::propagate_file(&graph, &features, cfg.gcc.p, &propagated).map(|_| ()),
    )?;

    let result = at(RESULT);
    let embedding = at(EMBEDDING);
    let mut fit_outputs = vec![result.clone()];
    fit_outputs.extend(matrix_files(embedding.clone()));
    run.stage(
        "fit",
        || {
            Ok(StageKey::new("fit")
                .file(&propagated)?
                .param(&cfg.gcc)
                .finish())
        },
        &fit_outputs,
        || stages::fit_file(&propagated, &cfg.gcc, &result, Some(&embedding)).map(|_| ()),
    )?;

    let truth = stages::load_tokenized(&tokenized)?.labels();
    let metrics = match truth {
        Some(truth) => {
            let metrics_path = at(METRICS);
            run.stage(
                "evaluate",
                || {
                    Ok(StageKey::new("evaluate")
                        .file(&result)?
                        .file(&tokenized)?
                        .finish())
                },
                std::slice::from_ref(&metrics_path),
                || {
                    let pred = stages::read_result(&result)?.assignments;
                    let s = stages::evaluate(&pred, &truth)?;
                    std::fs::write(&metrics_path, stages::metrics_json(&s))?;
                    Ok(())
                },
            )?;
            let pred = stages::read_result(&result)?.assignments;
            Some(stages::evaluate(&pred, &truth)?)
        }
        None => None,
    };

    Ok(PipelineReport {
        stages: run.stages,
        result,
        metrics,
    })
}

/// Stopword setting plus, for file lists, the file's content hash.
fn stopword_fingerprint(setting: &str) -> Result<String> {
    match setting {
        "english" | "french" | "none" => Ok(setting.to_owned()),
        path => Ok(format!(
            "file:{}",
            crate::cache::hash_file(Path::new(path))?
        )),
    }
}
