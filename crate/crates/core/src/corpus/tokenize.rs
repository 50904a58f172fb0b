use std::collections::{HashMap, HashSet};

use unicode_normalization::UnicodeNormalization;

/// Lowercases and NFC-normalizes `text`, then splits it into words made of
/// letters, digits and underscores. Every other character acts as a separator.
pub fn normalize_words(text: &str) -> Vec<String> {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let lowered: String = lowered.nfc().collect();
    lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Maps an entity surface string to the single token it becomes after
/// merging, e.g. `"Kylian Mbappé"` -> `"kylian_mbappé"`.
///
/// Returns `None` when the surface contains no word characters at all.
pub fn entity_token(surface: &str) -> Option<String> {
    let words = normalize_words(surface);
    if words.is_empty() {
        None
    } else {
        Some(words.join("_"))
    }
}

/// Multi-word entity surfaces indexed by their first word, longest first.
#[derive(Debug, Default, Clone)]
pub struct EntityMerger {
    by_first: HashMap<String, Vec<Vec<String>>>,
}

impl EntityMerger {
    pub fn new<'a, I>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut by_first: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        let mut seen = HashSet::new();
        for surface in surfaces {
            let words = normalize_words(surface);
            if words.len() < 2 || !seen.insert(words.clone()) {
                continue;
            }
            by_first.entry(words[0].clone()).or_default().push(words);
        }
        for candidates in by_first.values_mut() {
            // longest match wins; equal lengths ordered lexicographically
            candidates.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Self { by_first }
    }

    pub fn is_empty(&self) -> bool {
        self.by_first.is_empty()
    }

    /// Greedy left-to-right longest-match replacement of entity word runs.
    pub fn merge(&self, words: Vec<String>) -> Vec<String> {
        if self.by_first.is_empty() {
            return words;
        }
        let mut out = Vec::with_capacity(words.len());
        let mut i = 0;
        while i < words.len() {
            let hit = self.by_first.get(&words[i]).and_then(|candidates| {
                candidates.iter().find(|cand| {
                    words.len() - i >= cand.len() && words[i..i + cand.len()] == cand[..]
                })
            });
            match hit {
                Some(cand) => {
                    out.push(cand.join("_"));
                    i += cand.len();
                }
                None => {
                    out.push(words[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

/// Normalizes `text`, merges multi-word entity surfaces into single
/// underscore-joined tokens and then drops stopwords.
///
/// Entity merging runs before stopword removal so that entities containing
/// stopwords ("United States of America") survive intact.
pub fn tokenize(text: &str, stopwords: &HashSet<String>, merge_entities: &[&str]) -> Vec<String> {
    let merger = EntityMerger::new(merge_entities.iter().copied());
    tokenize_with(text, stopwords, &merger)
}

pub(crate) fn tokenize_with(
    text: &str,
    stopwords: &HashSet<String>,
    merger: &EntityMerger,
) -> Vec<String> {
    merger
        .merge(normalize_words(text))
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}
