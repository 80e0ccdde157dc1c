//! Sparse TF-IDF n-gram vectors and the external document-embedding store.

mod embeddings;

pub use embeddings::{load_embeddings, EmbeddingStore, EMBEDDING_MAGIC, EMBEDDING_VERSION};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub const DEFAULT_MIN_DF: usize = 2;
pub const DEFAULT_MAX_FEATURES: usize = 100_000;

/// N-gram → column map fitted on training documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Lexicographically sorted `(n-gram, document frequency)`; the column index is the position.
    terms: Vec<(String, usize)>,
    n_docs: usize,
    max_n: usize,
    min_df: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

fn ngrams(tokens: &[String], max_n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=max_n).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn column(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn term(&self, column: usize) -> &str {
        &self.terms[column].0
    }

    pub fn idf(&self, column: usize) -> f64 {
        let df = self.terms[column].1 as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
    }
}

/// Fits a vocabulary of case-folded n-grams (1 ≤ n ≤ `max_n`) with
/// document frequency ≥ `min_df`, keeping at most `max_features` of the most
/// frequent ones (ties broken lexicographically).
pub fn fit_vocabulary<S: AsRef<str>>(
    train_documents: &[S],
    max_n: usize,
    min_df: usize,
    max_features: usize,
) -> Result<Vocabulary> {
    if train_documents.is_empty() {
        return Err(Error::Empty("training documents"));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument("max_n must be at least 1".into()));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in train_documents {
        let tokens = text::folded_tokens(doc.as_ref());
        let mut seen: Vec<String> = ngrams(&tokens, max_n).collect();
        seen.sort_unstable();
        seen.dedup();
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, f)| *f >= min_df).collect();
    if kept.len() > max_features {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(max_features);
    }
    kept.sort();
    let mut vocab = Vocabulary {
        terms: kept,
        n_docs: train_documents.len(),
        max_n,
        min_df,
        index: HashMap::new(),
    };
    vocab.reindex();
    Ok(vocab)
}

/// Sparse vector with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, w) in &self.entries {
            out[i as usize] = w;
        }
        out
    }
}

/// `tf · (ln((1+N)/(1+df)) + 1)` per in-vocabulary n-gram, L2-normalized.
pub fn tfidf_vector(document: &str, vocab: &Vocabulary) -> SparseVector {
    let tokens = text::folded_tokens(document);
    let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
    for g in ngrams(&tokens, vocab.max_n) {
        if let Some(col) = vocab.column(&g) {
            *tf.entry(col as u32).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(u32, f64)> = tf
        .into_iter()
        .map(|(col, count)| (col, count * vocab.idf(col as usize)))
        .collect();
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    SparseVector { entries }
}
