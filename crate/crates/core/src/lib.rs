//! Document clustering that links documents through shared named entities,
//! smooths their features over that graph, and clusters the result with a
//! joint embedding and k-means objective.
//!
//! The stages, in pipeline order:
//!
//! * [`corpus`]: documents, entity annotations, tokenization, vocabulary.
//! * [`w2v`]: CBOW Word2Vec with negative sampling for entity similarity.
//! * [`graph`]: the entity-match document graph, plus a k-NN alternative.
//! * [`features`]: bag-of-words or precomputed embedding features.
//! * [`propagation`]: the smoothing operator `T` and `T^p X`.
//! * [`gcc`]: the alternating solver.
//! * [`selection`]: choosing `k` and `p` without labels.
//! * [`metrics`]: ACC, NMI and ARI against reference labels.
//! * [`synth`]: planted-partition corpora.

pub mod corpus;
pub mod features;
pub mod gcc;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod propagation;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod w2v;
