//! Planted-partition corpora for end-to-end testing.
//!
//! Each topic owns a disjoint pool of two-word entities. A document draws
//! its entities from its topic's pool, except that each draw leaks to a
//! random other topic with probability `leak`. Features are the topic mean
//! plus isotropic Gaussian noise, and the text interleaves the entity
//! surfaces with generic filler words.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    save_corpus_jsonl, save_entities_jsonl, Corpus, Document, EntityAnnotation, EntityTable,
};
use crate::features::{save_embeddings_jsonl, FeatureError, FeatureKind, FeatureMatrix};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("writing {path}: {message}")]
    Write { path: String, message: String },
}

pub const ENTITY_TYPES: [&str; 3] = ["PER", "ORG", "LOC"];

const FILLER: &[&str] = &[
    "report", "market", "season", "plan", "meeting", "result", "week", "growth", "team", "policy",
    "record", "deal", "change", "share", "game", "talks", "review", "figure", "support", "future",
    "record", "office", "chance", "project", "budget", "player", "service", "launch", "study",
    "level",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub k_true: usize,
    /// Entities owned by each topic.
    pub entity_pool_size: usize,
    pub entities_per_doc: usize,
    /// Probability that an entity draw comes from another topic.
    pub leak: f64,
    pub feature_dim: usize,
    /// Standard deviation of the per-document feature noise.
    pub feature_noise: f64,
    /// Scale of the topic means (entries are `N(0, separation²)`).
    pub separation: f64,
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 600,
            k_true: 5,
            entity_pool_size: 20,
            entities_per_doc: 6,
            leak: 0.05,
            feature_dim: 32,
            feature_noise: 1.0,
            separation: 1.0,
            filler_words: 20,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.k_true < 2 {
            return bad(format!("k_true must be >= 2, got {}", self.k_true));
        }
        if !(0.0..1.0).contains(&self.leak) {
            return bad(format!("leak must be in [0, 1), got {}", self.leak));
        }
        if self.entities_per_doc > self.entity_pool_size {
            return bad(format!(
                "entity pool of {} cannot supply {} distinct entities per document",
                self.entity_pool_size, self.entities_per_doc
            ));
        }
        if self.n_docs < self.k_true {
            return bad(format!(
                "{} documents cannot cover {} topics",
                self.n_docs, self.k_true
            ));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1".into());
        }
        if !(self.feature_noise >= 0.0 && self.separation >= 0.0) {
            return bad("noise and separation must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub entities: EntityTable,
    pub features: FeatureMatrix,
    /// Topic means, `k_true x feature_dim`.
    pub means: DMatrix<f64>,
}

pub fn entity_surface(topic: usize, i: usize) -> String {
    format!("Topic{topic} Entity{i}")
}

pub fn entity_type(i: usize) -> &'static str {
    ENTITY_TYPES[i % ENTITY_TYPES.len()]
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, k, d) = (cfg.n_docs, cfg.k_true, cfg.feature_dim);

    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);

    let means = DMatrix::from_fn(k, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        cfg.separation * z
    });
    let noise = Normal::new(0.0, cfg.feature_noise).expect("validated");

    let mut docs = Vec::with_capacity(n);
    let mut annotations = Vec::with_capacity(n);
    let mut values = DMatrix::zeros(n, d);
    for (i, &t) in labels.iter().enumerate() {
        let id = format!("doc{i:05}");
        let mut picks: Vec<(usize, usize)> =
            index::sample(&mut rng, cfg.entity_pool_size, cfg.entities_per_doc)
                .into_iter()
                .map(|e| (t, e))
                .collect();
        for pick in picks.iter_mut() {
            if rng.random::<f64>() < cfg.leak {
                let other = (t + rng.random_range(1..k)) % k;
                *pick = (other, rng.random_range(0..cfg.entity_pool_size));
            }
        }
        let mut by_type: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for &(topic, e) in &picks {
            by_type
                .entry(entity_type(e).to_owned())
                .or_default()
                .push(entity_surface(topic, e));
        }

        let mut words: Vec<String> = (0..cfg.filler_words)
            .map(|_| FILLER[rng.random_range(0..FILLER.len())].to_owned())
            .collect();
        for &(topic, e) in &picks {
            let at = rng.random_range(0..=words.len());
            words.insert(at, entity_surface(topic, e));
        }
        docs.push(Document::new(id.clone(), words.join(" ") + ".", Some(t)));
        annotations.push(EntityAnnotation::new(id, by_type));

        for j in 0..d {
            values[(i, j)] = means[(t, j)] + noise.sample(&mut rng);
        }
    }
    let corpus = Corpus::from_documents(docs).expect("generated ids are unique");
    let features =
        FeatureMatrix::new(FeatureKind::Llm, corpus.ids(), values).expect("finite by construction");
    Ok(SynthData {
        corpus,
        entities: EntityTable {
            per_doc: annotations,
            skipped_unknown: 0,
        },
        features,
        means,
    })
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";

impl SynthData {
    /// Writes `corpus.jsonl`, `entities.jsonl` and `embeddings.jsonl` into
    /// `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io_err = |p: &Path, e: &dyn std::fmt::Display| SynthError::Write {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, &e))?;
        let p = dir.join(CORPUS_FILE);
        save_corpus_jsonl(&self.corpus, &p).map_err(|e| io_err(&p, &e))?;
        let p = dir.join(ENTITIES_FILE);
        save_entities_jsonl(&self.entities, &p).map_err(|e| io_err(&p, &e))?;
        let p = dir.join(EMBEDDINGS_FILE);
        save_embeddings_jsonl(&self.features, &p).map_err(|e: FeatureError| io_err(&p, &e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_ner_graph, find_matches, GraphConfig};
    use crate::w2v::ExactMatchVectors;

    fn exact_graph(data: &SynthData) -> crate::graph::DocGraph {
        let toks = data.entities.per_doc.iter().flat_map(|a| {
            a.surfaces()
                .filter_map(crate::corpus::entity_token)
                .collect::<Vec<_>>()
        });
        let vecs = ExactMatchVectors::new(toks);
        let cfg = GraphConfig::default();
        let rep = find_matches(&data.entities, &vecs, &cfg).unwrap();
        build_ner_graph(&rep.matches, &cfg, data.corpus.len()).unwrap()
    }

    fn cross_edges(data: &SynthData) -> usize {
        let labels = data.corpus.labels().unwrap();
        exact_graph(data)
            .edges()
            .iter()
            .filter(|&&(i, j, _)| labels[i] != labels[j])
            .count()
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig {
            n_docs: 50,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.entities, b.entities);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig {
            k_true: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            leak: 1.0,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            entity_pool_size: 3,
            entities_per_doc: 4,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn balanced_labels_and_entity_counts() {
        let data = generate(&SynthConfig {
            n_docs: 100,
            ..Default::default()
        })
        .unwrap();
        let labels = data.corpus.labels().unwrap();
        for t in 0..5 {
            assert_eq!(labels.iter().filter(|&&l| l == t).count(), 20);
        }
        assert!(data
            .entities
            .per_doc
            .iter()
            .all(|a| a.len() <= 6 && !a.is_empty()));
        let doc = &data.corpus.docs()[0];
        let first = data.entities.per_doc[0].surfaces().next().unwrap();
        assert!(doc.text.contains(first));
    }

    #[test]
    fn no_leak_means_no_cross_topic_edges() {
        for seed in 0..3 {
            let data = generate(&SynthConfig {
                n_docs: 200,
                leak: 0.0,
                seed,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(cross_edges(&data), 0);
        }
    }

    #[test]
    fn more_leak_more_cross_edges() {
        let total = |leak: f64| -> usize {
            (0..4)
                .map(|seed| {
                    cross_edges(
                        &generate(&SynthConfig {
                            n_docs: 200,
                            leak,
                            seed,
                            ..Default::default()
                        })
                        .unwrap(),
                    )
                })
                .sum()
        };
        let (lo, mid, hi) = (total(0.05), total(0.3), total(0.6));
        assert!(lo <= mid && mid <= hi, "{lo} {mid} {hi}");
        assert!(hi > lo);
    }
}
