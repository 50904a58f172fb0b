use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureKind, FeatureMatrix, Result};
use crate::corpus::{token_frequencies, Corpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BowWeighting {
    #[default]
    Counts,
    /// Raw counts times smoothed idf `ln((1 + n) / (1 + df)) + 1`.
    TfIdf,
}

/// Document-term matrix over the `max_features` most frequent tokens
/// (ties broken lexicographically). Column order follows that ranking.
pub fn build_bow(
    corpus: &Corpus,
    max_features: usize,
    weighting: BowWeighting,
) -> Result<(FeatureMatrix, Vec<String>)> {
    let columns: Vec<String> = token_frequencies(corpus)
        .into_iter()
        .take(max_features)
        .map(|(t, _)| t)
        .collect();
    if columns.is_empty() {
        return Err(FeatureError::NoTokens);
    }
    let col_of: HashMap<&str, usize> = columns
        .iter()
        .enumerate()
        .map(|(j, t)| (t.as_str(), j))
        .collect();
    let n = corpus.len();
    let mut m = DMatrix::<f64>::zeros(n, columns.len());
    for (i, doc) in corpus.docs().iter().enumerate() {
        for t in &doc.tokens {
            if let Some(&j) = col_of.get(t.as_str()) {
                m[(i, j)] += 1.0;
            }
        }
    }
    if weighting == BowWeighting::TfIdf {
        for j in 0..m.ncols() {
            let df = m.column(j).iter().filter(|&&x| x > 0.0).count() as f64;
            let idf = ((1.0 + n as f64) / (1.0 + df)).ln() + 1.0;
            m.column_mut(j).scale_mut(idf);
        }
    }
    let fm = FeatureMatrix::new(FeatureKind::Bow, corpus.ids(), m)?;
    Ok((fm, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(texts: &[&str]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut d = Document::new(format!("d{i}"), *t, None);
                d.tokens = t.split_whitespace().map(str::to_owned).collect();
                d
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn counts_top_tokens() {
        let c = corpus(&["a b a", "b c", ""]);
        let (m, cols) = build_bow(&c, 2, BowWeighting::Counts).unwrap();
        // a:2 b:2 c:1 -> a, b kept
        assert_eq!(cols, vec!["a", "b"]);
        assert_eq!(
            m.values().row(0).iter().copied().collect::<Vec<_>>(),
            vec![2.0, 1.0]
        );
        assert_eq!(
            m.values().row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0]
        );
        assert!(m.values().row(2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn width_capped_by_vocabulary() {
        let c = corpus(&["x y z"]);
        let (m, _) = build_bow(&c, 2000, BowWeighting::Counts).unwrap();
        assert_eq!(m.d(), 3);
    }

    #[test]
    fn identical_documents_identical_rows() {
        let c = corpus(&["p q q r", "p q q r", "s"]);
        let (m, _) = build_bow(&c, 10, BowWeighting::TfIdf).unwrap();
        assert_eq!(m.values().row(0), m.values().row(1));
        let (m2, _) = build_bow(&c, 10, BowWeighting::TfIdf).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn empty_corpus_tokens_error() {
        let c = corpus(&["", ""]);
        assert!(matches!(
            build_bow(&c, 5, BowWeighting::Counts),
            Err(FeatureError::NoTokens)
        ));
    }
}
