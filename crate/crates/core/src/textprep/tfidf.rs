use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CleanDoc;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary mismatch: expected {expected} terms, got {got}")]
    VocabularyMismatch { expected: usize, got: usize },
}

/// Term index with document frequencies and the corpus size they came from.
/// Terms are indexed in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabWire", into = "VocabWire")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabWire {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
}

impl From<VocabWire> for Vocabulary {
    fn from(w: VocabWire) -> Self {
        Vocabulary::from_parts(w.terms, w.df, w.n_docs)
    }
}

impl From<Vocabulary> for VocabWire {
    fn from(v: Vocabulary) -> Self {
        VocabWire {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: usize) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            terms,
            df,
            n_docs,
            index,
        }
    }

    /// Collects every term of `docs`. With `max_features`, only the terms
    /// with the highest total count are kept (ties broken alphabetically).
    pub fn build(docs: &[CleanDoc], max_features: Option<usize>) -> Result<Self, TextError> {
        if docs.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        // term -> (df, total count)
        let mut stats: BTreeMap<&str, (u32, u64)> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in &seen {
                stats.entry(t).or_default().1 += 1;
            }
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                stats.entry(t).or_default().0 += 1;
            }
        }
        let mut kept: Vec<(&str, (u32, u64))> = stats.into_iter().collect();
        if let Some(limit) = max_features {
            if kept.len() > limit {
                kept.sort_by(|a, b| b.1 .1.cmp(&a.1 .1).then(a.0.cmp(b.0)));
                kept.truncate(limit);
                kept.sort_by(|a, b| a.0.cmp(b.0));
            }
        }
        let (terms, df) = kept
            .into_iter()
            .map(|(t, (df, _))| (t.to_string(), df))
            .unzip();
        Ok(Self::from_parts(terms, df, docs.len()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, i: usize) -> u32 {
        self.df[i]
    }

    /// Smoothed idf: `1 + ln((1 + N) / (1 + df))`.
    pub fn idf(&self, i: usize) -> f64 {
        1.0 + ((1.0 + self.n_docs as f64) / (1.0 + self.df[i] as f64)).ln()
    }

    /// Raw in-vocabulary term counts of `doc`, sorted by index.
    pub fn counts(&self, doc: &CleanDoc) -> Vec<(usize, u32)> {
        let mut c: BTreeMap<usize, u32> = BTreeMap::new();
        for t in &doc.tokens {
            if let Some(i) = self.index_of(t) {
                *c.entry(i).or_default() += 1;
            }
        }
        c.into_iter().collect()
    }
}

/// Sparse vector sorted by index, without explicit zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries
            .binary_search_by_key(&i, |e| e.0)
            .map_or(0.0, |p| self.entries[p].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Dot product with a dense vector.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    pub doc_ids: Vec<String>,
    pub rows: Vec<SparseVec>,
    pub n_cols: usize,
}

impl DocTermMatrix {
    /// Sparse triplets `doc_id<TAB>term<TAB>weight`, one per line.
    pub fn dump(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for (id, row) in self.doc_ids.iter().zip(&self.rows) {
            for &(j, w) in &row.entries {
                let _ = writeln!(out, "{id}\t{}\t{w}", vocab.term(j));
            }
        }
        out
    }
}

/// TF-IDF row of `doc` against a frozen vocabulary: raw counts times idf,
/// L2-normalized. Out-of-vocabulary terms are ignored.
pub fn vectorize(doc: &CleanDoc, vocab: &Vocabulary) -> SparseVec {
    let mut entries: Vec<(usize, f64)> = vocab
        .counts(doc)
        .into_iter()
        .map(|(i, c)| (i, c as f64 * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    SparseVec { entries }
}

/// Builds the vocabulary of `docs` and their normalized TF-IDF matrix.
pub fn build_matrix(
    docs: &[CleanDoc],
    max_features: Option<usize>,
) -> Result<(Vocabulary, DocTermMatrix), TextError> {
    let vocab = Vocabulary::build(docs, max_features)?;
    let rows = docs.iter().map(|d| vectorize(d, &vocab)).collect();
    let m = DocTermMatrix {
        doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
        rows,
        n_cols: vocab.len(),
    };
    Ok((vocab, m))
}
