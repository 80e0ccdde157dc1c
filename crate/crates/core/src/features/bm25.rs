//! Okapi BM25 over the candidate pool of one (entity, relation) pair.
//!
//! score(q, d) = Σ_{t∈q} idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·dl/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//!
//! The `ln(1 + ·)` form keeps idf positive even for terms present in every document.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: HashMap<String, usize>,
    term_counts: Vec<HashMap<String, u32>>,
    doc_lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avgdl: f64,
}

impl Bm25Index {
    /// Indexes `(doc_id, text)` pairs with the shared tokenizer, case-folded.
    pub fn build<'a, I>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self::from_tokens(
            docs.into_iter().map(|(id, body)| (id, text::folded_tokens(body))),
            params,
        )
    }

    pub fn from_tokens<'a, I>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec<String>)>,
    {
        let mut index = Bm25Index {
            params,
            doc_ids: HashMap::new(),
            term_counts: Vec::new(),
            doc_lengths: Vec::new(),
            doc_freq: HashMap::new(),
            avgdl: 0.0,
        };
        for (id, tokens) in docs {
            let mut counts: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
            for term in counts.keys() {
                *index.doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            index.doc_ids.insert(id.to_owned(), index.term_counts.len());
            index.term_counts.push(counts);
            index.doc_lengths.push(tokens.len());
        }
        let n = index.doc_lengths.len();
        if n > 0 {
            index.avgdl = index.doc_lengths.iter().sum::<usize>() as f64 / n as f64;
        }
        index
    }

    pub fn len(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lengths.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores `doc_id` against folded query tokens; repeated query tokens count repeatedly.
    pub fn score(&self, query: &[String], doc_id: &str) -> Result<f64> {
        let &i = self
            .doc_ids
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_owned()))?;
        let Bm25Params { k1, b } = self.params;
        let norm = 1.0 - b + b * self.doc_lengths[i] as f64 / self.avgdl;
        let mut score = 0.0;
        for term in query {
            let tf = self.term_counts[i].get(term).copied().unwrap_or(0) as f64;
            if tf > 0.0 {
                score += self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        Ok(score)
    }
}

/// Query for an (entity, relation) pair: folded entity tokens followed by the relation words.
pub fn query_tokens(entity: &str, relation_terms: &[String]) -> Vec<String> {
    let mut q = text::folded_tokens(entity);
    q.extend(relation_terms.iter().map(|t| t.to_lowercase()));
    q
}
