//! Library-level run of the whole method on planted data, plus checks that
//! the on-disk formats round-trip between stages.

use entclust::corpus::entity_token;
use entclust::features::{load_matrix, save_matrix};
use entclust::gcc::{fit_gcc, GccConfig};
use entclust::graph::{build_ner_graph, find_matches, DocGraph, GraphConfig};
use entclust::metrics::score_all;
use entclust::propagation::{build_propagator, propagate};
use entclust::synth::{generate, SynthConfig};
use entclust::w2v::ExactMatchVectors;

#[test]
fn planted_topics_are_recovered_through_the_entity_graph() {
    let data = generate(&SynthConfig {
        n_docs: 300,
        k_true: 3,
        feature_noise: 2.5,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let truth = data.corpus.labels().unwrap();
    let tokens = data
        .entities
        .per_doc
        .iter()
        .flat_map(|a| a.surfaces().filter_map(entity_token).collect::<Vec<_>>());
    let cfg = GraphConfig::default();
    let matches = find_matches(&data.entities, &ExactMatchVectors::new(tokens), &cfg).unwrap();
    let graph = build_ner_graph(&matches.matches, &cfg, data.corpus.len()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("g.txt");
    graph.save(&graph_path).unwrap();
    let graph = DocGraph::load(&graph_path).unwrap();

    let y = propagate(&build_propagator(&graph), &data.features, 3).unwrap();
    let y_path = dir.path().join("y.fmx");
    save_matrix(&y, &y_path).unwrap();
    let reloaded = load_matrix(&y_path).unwrap();
    assert_eq!(reloaded.ids(), y.ids());
    // the binary format stores f32
    let scale = y.values().amax();
    assert!((reloaded.values() - y.values()).amax() <= 1e-6 * scale);

    let state = fit_gcc(
        reloaded.values(),
        &GccConfig {
            k: 3,
            p: 3,
            seed: 1,
            ..GccConfig::default()
        },
    )
    .unwrap();
    let s = score_all(&state.assignments, &truth).unwrap();
    assert!(s.ari >= 0.9, "{s:?}");
    assert!(s.acc >= 0.95, "{s:?}");
}
