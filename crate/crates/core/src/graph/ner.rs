use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cosine_sim, DocGraph, GraphError, GraphKind, Result};
use crate::corpus::{entity_token, EntityTable};
use crate::w2v::TokenVectors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Minimum cosine similarity for two entities to match.
    pub sim_threshold: f64,
    /// Minimum number of matched entity pairs for two documents to link.
    pub min_shared_links: usize,
    pub same_type_only: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            sim_threshold: 0.9,
            min_shared_links: 3,
            same_type_only: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sim_threshold > 0.0 && self.sim_threshold <= 1.0) {
            return Err(GraphError::Config(format!(
                "sim_threshold {} not in (0, 1]",
                self.sim_threshold
            )));
        }
        if self.min_shared_links == 0 {
            return Err(GraphError::Config("min_shared_links must be >= 1".into()));
        }
        Ok(())
    }
}

/// A pair of similar entities found in two different documents
/// (`doc_i < doc_j`). Entities are the merged, normalized tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMatch {
    pub doc_i: usize,
    pub doc_j: usize,
    pub type_i: String,
    pub type_j: String,
    pub entity_i: String,
    pub entity_j: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub matches: Vec<EntityMatch>,
    /// Entity occurrences considered (after per-document deduplication).
    pub occurrences: usize,
    /// Occurrences skipped because the model has no vector for them.
    pub missing_vectors: usize,
    /// Distinct entity tokens with a vector.
    pub covered_tokens: usize,
}

impl MatchReport {
    pub fn coverage(&self) -> f64 {
        if self.occurrences == 0 {
            1.0
        } else {
            1.0 - self.missing_vectors as f64 / self.occurrences as f64
        }
    }
}

#[derive(Clone)]
struct Occurrence {
    doc: usize,
    ty: String,
}

/// Finds every cross-document entity pair whose similarity reaches
/// `sim_threshold`.
///
/// Similarities are computed once per distinct token pair and then expanded
/// over the documents mentioning each token. Identical tokens match with
/// similarity exactly 1.
pub fn find_matches(
    entities: &EntityTable,
    vectors: &dyn TokenVectors,
    cfg: &GraphConfig,
) -> Result<MatchReport> {
    cfg.validate()?;
    // bucket -> token -> occurrences
    let mut buckets: BTreeMap<String, BTreeMap<String, Vec<Occurrence>>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (doc, ann) in entities.per_doc.iter().enumerate() {
        for (ty, list) in &ann.entities {
            for surface in list {
                let Some(tok) = entity_token(surface) else {
                    continue;
                };
                if !seen.insert((doc, ty.clone(), tok.clone())) {
                    continue;
                }
                let bucket = if cfg.same_type_only {
                    ty.clone()
                } else {
                    String::new()
                };
                buckets
                    .entry(bucket)
                    .or_default()
                    .entry(tok)
                    .or_default()
                    .push(Occurrence {
                        doc,
                        ty: ty.clone(),
                    });
            }
        }
    }

    let mut report = MatchReport {
        occurrences: seen.len(),
        ..MatchReport::default()
    };
    let mut covered = BTreeSet::new();
    for postings in buckets.values() {
        let mut tokens: Vec<(&str, Vec<f64>, &[Occurrence])> = Vec::new();
        for (tok, occ) in postings {
            let v = vectors
                .vector(tok)
                .map(|v| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>())
                .filter(|v| v.iter().any(|&x| x != 0.0));
            match v {
                Some(v) => {
                    covered.insert(tok.clone());
                    tokens.push((tok.as_str(), v, occ.as_slice()));
                }
                None => report.missing_vectors += occ.len(),
            }
        }

        let pairs: Vec<(usize, usize, f64)> = if vectors.exact_only() {
            (0..tokens.len()).map(|u| (u, u, 1.0)).collect()
        } else {
            (0..tokens.len())
                .into_par_iter()
                .flat_map_iter(|u| {
                    let tokens = &tokens;
                    (u..tokens.len()).filter_map(move |v| {
                        let sim = if u == v {
                            1.0
                        } else {
                            cosine_sim(&tokens[u].1, &tokens[v].1).unwrap_or(0.0)
                        };
                        (sim >= cfg.sim_threshold).then_some((u, v, sim))
                    })
                })
                .collect()
        };

        for (u, v, sim) in pairs {
            let (tu, tv) = (&tokens[u], &tokens[v]);
            for x in tu.2 {
                for y in tv.2 {
                    let keep = if u == v {
                        x.doc < y.doc
                    } else {
                        x.doc != y.doc
                    };
                    if !keep {
                        continue;
                    }
                    let (a, ea, b, eb) = if x.doc < y.doc {
                        (x, tu.0, y, tv.0)
                    } else {
                        (y, tv.0, x, tu.0)
                    };
                    report.matches.push(EntityMatch {
                        doc_i: a.doc,
                        doc_j: b.doc,
                        type_i: a.ty.clone(),
                        type_j: b.ty.clone(),
                        entity_i: ea.to_owned(),
                        entity_j: eb.to_owned(),
                        similarity: sim,
                    });
                }
            }
        }
    }
    report.covered_tokens = covered.len();
    report.matches.sort_by(|a, b| {
        (
            a.doc_i,
            a.doc_j,
            &a.entity_i,
            &a.entity_j,
            &a.type_i,
            &a.type_j,
        )
            .cmp(&(
                b.doc_i,
                b.doc_j,
                &b.entity_i,
                &b.entity_j,
                &b.type_i,
                &b.type_j,
            ))
    });
    Ok(report)
}

/// Links documents with at least `min_shared_links` matched entity pairs.
/// The edge weight is the mean similarity over those matched pairs.
pub fn build_ner_graph(matches: &[EntityMatch], cfg: &GraphConfig, n: usize) -> Result<DocGraph> {
    cfg.validate()?;
    let mut groups: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();
    for m in matches {
        let e = groups
            .entry((m.doc_i.min(m.doc_j), m.doc_i.max(m.doc_j)))
            .or_insert((0, 0.0));
        e.0 += 1;
        e.1 += m.similarity;
    }
    let edges = groups
        .into_iter()
        .filter(|&(_, (count, _))| count >= cfg.min_shared_links)
        .map(|((i, j), (count, sum))| (i, j, sum / count as f64));
    let g = DocGraph::from_edges(n, GraphKind::Ner, edges);
    let isolates = super::graph_stats(&g).isolates;
    if isolates > 0 {
        tracing::warn!(
            isolates,
            nodes = n,
            "entity graph leaves documents without edges"
        );
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityAnnotation;
    use crate::w2v::ExactMatchVectors;
    use proptest::prelude::*;
    use std::borrow::Cow;
    use std::collections::HashMap;

    struct Fixed(HashMap<String, Vec<f32>>);

    impl TokenVectors for Fixed {
        fn dim(&self) -> usize {
            self.0.values().next().map_or(0, Vec::len)
        }
        fn vector(&self, token: &str) -> Option<Cow<'_, [f32]>> {
            self.0.get(token).map(|v| Cow::Borrowed(v.as_slice()))
        }
    }

    fn table(docs: &[&[(&str, &str)]]) -> EntityTable {
        EntityTable {
            per_doc: docs
                .iter()
                .enumerate()
                .map(|(i, ents)| {
                    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
                    for (ty, e) in *ents {
                        map.entry(ty.to_string()).or_default().push(e.to_string());
                    }
                    EntityAnnotation::new(format!("d{i}"), map)
                })
                .collect(),
            skipped_unknown: 0,
        }
    }

    fn m(i: usize, j: usize, sim: f64) -> EntityMatch {
        EntityMatch {
            doc_i: i,
            doc_j: j,
            type_i: "ORG".into(),
            type_j: "ORG".into(),
            entity_i: "x".into(),
            entity_j: "y".into(),
            similarity: sim,
        }
    }

    #[test]
    fn identical_entity_matches_with_one() {
        let t = table(&[&[("ORG", "PSG")], &[("ORG", "psg")]]);
        let r = find_matches(
            &t,
            &ExactMatchVectors::new(["psg"]),
            &GraphConfig::default(),
        )
        .unwrap();
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].similarity, 1.0);
        assert_eq!((r.matches[0].doc_i, r.matches[0].doc_j), (0, 1));
    }

    #[test]
    fn different_types_do_not_match() {
        let mut vecs = HashMap::new();
        vecs.insert("macron".to_string(), vec![1.0f32, 0.0]);
        // cos = 0.95
        vecs.insert(
            "elysee".to_string(),
            vec![0.95f32, (1.0f32 - 0.95 * 0.95).sqrt()],
        );
        let t = table(&[&[("PER", "Macron")], &[("ORG", "Elysee")]]);
        let cfg = GraphConfig::default();
        assert!(find_matches(&t, &Fixed(vecs.clone()), &cfg)
            .unwrap()
            .matches
            .is_empty());
        let loose = GraphConfig {
            same_type_only: false,
            ..cfg
        };
        let r = find_matches(&t, &Fixed(vecs), &loose).unwrap();
        assert_eq!(r.matches.len(), 1);
        assert!((r.matches[0].similarity - 0.95).abs() < 1e-6);
    }

    #[test]
    fn missing_vectors_are_counted() {
        let t = table(&[&[("ORG", "PSG"), ("ORG", "Nowhere Inc")], &[("ORG", "PSG")]]);
        let r = find_matches(
            &t,
            &ExactMatchVectors::new(["psg"]),
            &GraphConfig::default(),
        )
        .unwrap();
        assert_eq!(r.occurrences, 3);
        assert_eq!(r.missing_vectors, 1);
        assert_eq!(r.covered_tokens, 1);
        assert!((r.coverage() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_exact_links_give_unit_weight() {
        let ms = vec![m(0, 1, 1.0), m(0, 1, 1.0), m(0, 1, 1.0)];
        let g = build_ner_graph(&ms, &GraphConfig::default(), 2).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 1.0)]);
    }

    #[test]
    fn two_links_are_not_enough() {
        let ms = vec![m(0, 1, 1.0), m(0, 1, 1.0)];
        let g = build_ner_graph(&ms, &GraphConfig::default(), 2).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn weight_is_mean_of_matched_similarities() {
        let ms = vec![m(0, 1, 0.92), m(0, 1, 0.95), m(0, 1, 0.98)];
        let g = build_ner_graph(&ms, &GraphConfig::default(), 2).unwrap();
        // direct evaluation: (0.92 + 0.95 + 0.98) / |matched pairs| = 2.85 / 3
        let direct = (0.92 + 0.95 + 0.98) / 3.0;
        assert!((g.weight(0, 1) - 0.95).abs() < 1e-12);
        assert_eq!(g.weight(1, 0), direct);
    }

    #[test]
    fn invalid_config() {
        let bad = GraphConfig {
            sim_threshold: 0.0,
            ..GraphConfig::default()
        };
        assert!(build_ner_graph(&[], &bad, 1).is_err());
        let bad = GraphConfig {
            min_shared_links: 0,
            ..GraphConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    /// Direct enumeration over every document pair and every entity pair.
    fn brute_force(
        t: &EntityTable,
        vecs: &dyn TokenVectors,
        cfg: &GraphConfig,
    ) -> Vec<EntityMatch> {
        let occ: Vec<Vec<(String, String)>> = t
            .per_doc
            .iter()
            .map(|a| {
                let mut v: Vec<(String, String)> = a
                    .entities
                    .iter()
                    .flat_map(|(ty, l)| {
                        l.iter()
                            .filter_map(move |s| entity_token(s).map(|tok| (ty.clone(), tok)))
                    })
                    .collect();
                v.sort();
                v.dedup();
                v
            })
            .collect();
        let mut out = Vec::new();
        for i in 0..occ.len() {
            for j in i + 1..occ.len() {
                for (ta, ea) in &occ[i] {
                    for (tb, eb) in &occ[j] {
                        if cfg.same_type_only && ta != tb {
                            continue;
                        }
                        let (Some(va), Some(vb)) = (vecs.vector(ea), vecs.vector(eb)) else {
                            continue;
                        };
                        let va: Vec<f64> = va.iter().map(|&x| x as f64).collect();
                        let vb: Vec<f64> = vb.iter().map(|&x| x as f64).collect();
                        let Ok(sim) = cosine_sim(&va, &vb) else {
                            continue;
                        };
                        let sim = if ea == eb { 1.0 } else { sim };
                        if sim >= cfg.sim_threshold {
                            out.push(EntityMatch {
                                doc_i: i,
                                doc_j: j,
                                type_i: ta.clone(),
                                type_j: tb.clone(),
                                entity_i: ea.clone(),
                                entity_j: eb.clone(),
                                similarity: sim,
                            });
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| {
            (
                a.doc_i,
                a.doc_j,
                &a.entity_i,
                &a.entity_j,
                &a.type_i,
                &a.type_j,
            )
                .cmp(&(
                    b.doc_i,
                    b.doc_j,
                    &b.entity_i,
                    &b.entity_j,
                    &b.type_i,
                    &b.type_j,
                ))
        });
        out
    }

    #[test]
    fn three_doc_toy_matches_brute_force() {
        let mut vecs = HashMap::new();
        vecs.insert("psg".to_string(), vec![1.0f32, 0.1, 0.0]);
        vecs.insert("paris_sg".to_string(), vec![1.0f32, 0.12, 0.01]);
        vecs.insert("om".to_string(), vec![0.0f32, 1.0, 0.0]);
        vecs.insert("kylian_mbappé".to_string(), vec![0.0f32, 0.0, 1.0]);
        let t = table(&[
            &[("ORG", "PSG"), ("PER", "Kylian Mbappé")],
            &[("ORG", "Paris SG"), ("ORG", "OM"), ("PER", "Kylian Mbappé")],
            &[("ORG", "PSG"), ("ORG", "OM")],
        ]);
        let vecs = Fixed(vecs);
        let cfg = GraphConfig::default();
        let got = find_matches(&t, &vecs, &cfg).unwrap().matches;
        assert_eq!(got, brute_force(&t, &vecs, &cfg));
        assert_eq!(got.len(), 5);
    }

    fn random_case() -> impl Strategy<Value = (EntityTable, HashMap<String, Vec<f32>>)> {
        let vocab = proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 3), 12);
        let docs = proptest::collection::vec(
            proptest::collection::vec((0usize..2, 0usize..12), 0..5),
            2..10,
        );
        (vocab, docs).prop_map(|(vs, docs)| {
            let mut vecs = HashMap::new();
            for (i, v) in vs.into_iter().enumerate() {
                // every third token has no vector
                if i % 3 != 2 {
                    vecs.insert(format!("e{i}"), v);
                }
            }
            let per_doc = docs
                .into_iter()
                .enumerate()
                .map(|(d, ents)| {
                    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
                    for (ty, e) in ents {
                        map.entry(["PER", "ORG"][ty].to_string())
                            .or_default()
                            .push(format!("E{e}"));
                    }
                    EntityAnnotation::new(format!("d{d}"), map)
                })
                .collect();
            (
                EntityTable {
                    per_doc,
                    skipped_unknown: 0,
                },
                vecs,
            )
        })
    }

    proptest! {
        #[test]
        fn matches_equal_brute_force((t, vecs) in random_case(), tau in 0.05f64..1.0, same in any::<bool>()) {
            let cfg = GraphConfig { sim_threshold: tau, same_type_only: same, ..GraphConfig::default() };
            let vecs = Fixed(vecs);
            let got = find_matches(&t, &vecs, &cfg).unwrap().matches;
            prop_assert_eq!(got, brute_force(&t, &vecs, &cfg));
        }

        #[test]
        fn raising_thresholds_never_adds_edges((t, vecs) in random_case(), lo in 0.05f64..1.0, bump in 0.0f64..0.5, c_lo in 1usize..4, c_bump in 0usize..3) {
            let vecs = Fixed(vecs);
            let base = GraphConfig { sim_threshold: lo, min_shared_links: c_lo, same_type_only: true };
            let strict = GraphConfig { sim_threshold: (lo + bump).min(1.0), min_shared_links: c_lo + c_bump, same_type_only: true };
            let n = t.per_doc.len();
            let g0 = build_ner_graph(&find_matches(&t, &vecs, &base).unwrap().matches, &base, n).unwrap();
            let g1 = build_ner_graph(&find_matches(&t, &vecs, &strict).unwrap().matches, &strict, n).unwrap();
            for &(i, j, _) in g1.edges() {
                prop_assert!(g0.weight(i, j) > 0.0);
            }
        }
    }
}
