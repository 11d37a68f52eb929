use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{TopicError, TopicModel};
use crate::textprep::CleanDoc;

pub const CV_WINDOW: usize = 110;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

/// C_V of the model's `top_n` words per topic against `reference`.
pub fn coherence_cv(model: &TopicModel, top_n: usize, reference: &[CleanDoc]) -> Result<CoherenceReport, TopicError> {
    let topics: Vec<Vec<String>> = (0..model.k)
        .map(|t| model.top_words(t, top_n).into_iter().map(|(w, _)| w).collect())
        .collect();
    coherence_cv_words(&topics, reference)
}

/// C_V of explicit word lists. Windows of [`CV_WINDOW`] tokens slide over
/// each reference document; a document shorter than the window counts as a
/// single window.
pub fn coherence_cv_words(topics: &[Vec<String>], reference: &[CleanDoc]) -> Result<CoherenceReport, TopicError> {
    coherence_cv_windowed(topics, reference, CV_WINDOW)
}

pub(crate) fn coherence_cv_windowed(
    topics: &[Vec<String>],
    reference: &[CleanDoc],
    window: usize,
) -> Result<CoherenceReport, TopicError> {
    if topics.is_empty() || topics.iter().any(|t| t.len() < 2) {
        return Err(TopicError::BadConfig("every topic needs at least two words".into()));
    }
    if reference.iter().all(|d| d.is_empty()) {
        return Err(TopicError::EmptyCorpus);
    }
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for w in topics.iter().flatten() {
        let n = ids.len();
        ids.entry(w.as_str()).or_insert(n);
    }
    let m = ids.len();
    let mut single = vec![0u64; m];
    let mut pair = vec![0u64; m * m];
    let mut n_windows = 0u64;

    for doc in reference {
        if doc.is_empty() {
            continue;
        }
        let toks: Vec<Option<usize>> = doc.tokens.iter().map(|t| ids.get(t.as_str()).copied()).collect();
        let starts = if toks.len() <= window { 1 } else { toks.len() - window + 1 };
        // Per-window counts maintained incrementally as the window slides.
        let mut inside = vec![0u32; m];
        let first = &toks[..toks.len().min(window)];
        for t in first.iter().flatten() {
            inside[*t] += 1;
        }
        for s in 0..starts {
            if s > 0 {
                if let Some(out) = toks[s - 1] {
                    inside[out] -= 1;
                }
                if let Some(inn) = toks[s + window - 1] {
                    inside[inn] += 1;
                }
            }
            n_windows += 1;
            let present: Vec<usize> = (0..m).filter(|&i| inside[i] > 0).collect();
            for (a, &i) in present.iter().enumerate() {
                single[i] += 1;
                for &j in &present[a + 1..] {
                    pair[i * m + j] += 1;
                    pair[j * m + i] += 1;
                }
            }
        }
    }

    let nw = n_windows as f64;
    let npmi = |i: usize, j: usize| -> f64 {
        let (pi, pj) = (single[i] as f64 / nw, single[j] as f64 / nw);
        let pij = if i == j { pi } else { pair[i * m + j] as f64 / nw };
        ((pij + EPS) / (pi * pj)).ln() / -(pij + EPS).ln()
    };

    let mut per_topic = Vec::with_capacity(topics.len());
    for words in topics {
        let idx: Vec<usize> = words.iter().map(|w| ids[w.as_str()]).collect();
        if let Some(w) = words.iter().zip(&idx).find(|(_, &i)| single[i] == 0) {
            return Err(TopicError::InsufficientReference(w.0.clone()));
        }
        let vecs: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| npmi(i, j)).collect()).collect();
        let total: Vec<f64> = (0..idx.len()).map(|c| vecs.iter().map(|v| v[c]).sum()).collect();
        let sims: f64 = vecs.iter().map(|v| cos(v, &total)).sum();
        per_topic.push(sims / idx.len() as f64);
    }
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(CoherenceReport { per_topic, mean })
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}
