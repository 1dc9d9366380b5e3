//! TF-IDF over per-cluster caption documents.
//!
//! Weight of term `t` in document `d`: `tf(t, d) * (ln((1 + C) / (1 + df(t))) + 1)`
//! with `tf` the raw count, `C` the number of documents and `df` the number
//! of documents containing `t`. Terms are lemma unigrams plus adjacent-lemma
//! bigrams; bigrams never span a caption boundary (newline or `;`).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::text::TextPreprocessor;
use crate::error::{Error, Result};

use super::pos::{filter_nouns, PosLexicon};

pub const DEFAULT_TOP_K: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordScore {
    pub term: String,
    pub score: f64,
}

/// Unigram and bigram terms of one document, in occurrence order.
pub fn document_terms(doc: &str, pre: &TextPreprocessor) -> Vec<String> {
    let mut terms = Vec::new();
    for segment in doc.split(['\n', ';']) {
        let lemmas = pre.lemmas(segment);
        terms.extend(lemmas.iter().cloned());
        terms.extend(lemmas.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    terms
}

#[derive(Debug, Clone)]
pub struct TfidfCorpus {
    counts: Vec<HashMap<String, usize>>,
    df: HashMap<String, usize>,
}

impl TfidfCorpus {
    pub fn build<S: AsRef<str>>(docs: &[S], pre: &TextPreprocessor) -> Self {
        let counts: Vec<HashMap<String, usize>> = docs
            .iter()
            .map(|d| {
                let mut tf = HashMap::new();
                for t in document_terms(d.as_ref(), pre) {
                    *tf.entry(t).or_insert(0) += 1;
                }
                tf
            })
            .collect();
        let mut df = HashMap::new();
        for tf in &counts {
            for t in tf.keys() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Self { counts, df }
    }

    pub fn num_docs(&self) -> usize {
        self.counts.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let c = self.counts.len() as f64;
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((1.0 + c) / (1.0 + df)).ln() + 1.0
    }

    /// Every term of the target document by (score desc, term asc).
    pub fn ranked_terms(&self, target: usize) -> Result<Vec<KeywordScore>> {
        let tf = self.counts.get(target).ok_or_else(|| {
            Error::Describe(format!(
                "document index {target} out of range ({} documents)",
                self.counts.len()
            ))
        })?;
        if tf.is_empty() {
            return Err(Error::Describe(format!(
                "cluster document {target} is empty after preprocessing"
            )));
        }
        let mut scored: Vec<KeywordScore> = tf
            .iter()
            .map(|(t, &n)| KeywordScore {
                term: t.clone(),
                score: n as f64 * self.idf(t),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.term.cmp(&b.term))
        });
        Ok(scored)
    }

    /// Ranked terms, noun-filtered, then cut to `k`.
    pub fn top_nouns(
        &self,
        target: usize,
        k: usize,
        lexicon: &PosLexicon,
    ) -> Result<Vec<KeywordScore>> {
        let mut nouns = filter_nouns(&self.ranked_terms(target)?, lexicon);
        nouns.truncate(k);
        Ok(nouns)
    }
}

/// The top `k` noun keywords of `cluster_docs[target_index]` using the bundled
/// preprocessor and lexicon.
pub fn tfidf_keywords<S: AsRef<str>>(
    cluster_docs: &[S],
    target_index: usize,
    k: usize,
) -> Result<Vec<KeywordScore>> {
    if k == 0 {
        return Err(Error::Describe("k must be at least 1".into()));
    }
    TfidfCorpus::build(cluster_docs, TextPreprocessor::bundled()).top_nouns(
        target_index,
        k,
        PosLexicon::bundled(),
    )
}
