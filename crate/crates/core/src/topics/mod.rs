//! Online LDA topic modeling, per-post topic membership, topic graphs and
//! topic quality metrics.

mod coherence;
mod olda;
pub mod special;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::socialgraph::SocialGraph;
use crate::textprep::{vectorize, CleanDoc, SparseVec};

pub use coherence::{coherence_cv, coherence_cv_words, CoherenceReport};
pub use olda::{update_dir_prior, Bow, FitStats, OldaConfig, Prior, TopicModel};

/// Default membership threshold on θ.
pub const DEFAULT_EPS_C: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopicError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("expected {expected} terms, got {got}")]
    VocabularyMismatch { expected: usize, got: usize },
    #[error("word {0:?} never occurs in the reference corpus")]
    InsufficientReference(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("model snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMembership {
    pub doc_id: String,
    pub theta: Vec<f64>,
    pub members: BTreeSet<usize>,
}

impl TopicMembership {
    pub fn new(doc_id: &str, theta: Vec<f64>, eps_c: f64) -> Self {
        let members = theta
            .iter()
            .enumerate()
            .filter(|(_, t)| **t >= eps_c)
            .map(|(j, _)| j)
            .collect();
        Self {
            doc_id: doc_id.to_string(),
            theta,
            members,
        }
    }

    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (j, t) in self.theta.iter().enumerate() {
            if *t > self.theta[best] {
                best = j;
            }
        }
        best
    }
}

/// How a post is assigned to topics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MembershipRule {
    /// θ_j ≥ ε_c on the inferred topic mixture.
    #[default]
    Posterior,
    /// Cosine between the post's TF-IDF vector and the topic-word row ≥ ε_c.
    Cosine,
}

impl TopicModel {
    /// Membership under `rule`. Under [`MembershipRule::Cosine`] the `theta`
    /// field holds the cosine similarities.
    pub fn membership(&self, doc: &CleanDoc, eps_c: f64, rule: MembershipRule) -> TopicMembership {
        match rule {
            MembershipRule::Posterior => self.infer(doc, eps_c),
            MembershipRule::Cosine => {
                let x = vectorize(doc, &self.vocab);
                let sims = self.cosine_to_topics(&x);
                TopicMembership::new(&doc.doc_id, sims, eps_c)
            }
        }
    }

    fn cosine_to_topics(&self, x: &SparseVec) -> Vec<f64> {
        let v = self.n_terms();
        let tw = self.topic_word();
        let xn = x.norm();
        tw.chunks(v)
            .map(|row| {
                let rn = row.iter().map(|p| p * p).sum::<f64>().sqrt();
                if xn == 0.0 || rn == 0.0 {
                    0.0
                } else {
                    x.dot_dense(row) / (xn * rn)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicGraph {
    pub topic: usize,
    pub graph: SocialGraph,
}

/// Memberships for every node of every graph, in graph then node order.
pub fn memberships(graphs: &[SocialGraph], model: &TopicModel, eps_c: f64, rule: MembershipRule) -> Vec<TopicMembership> {
    let docs: Vec<&CleanDoc> = graphs.iter().flat_map(|g| g.nodes().map(|n| &n.content)).collect();
    docs.par_iter()
        .map(|d| model.membership(d, eps_c, rule))
        .collect()
}

/// One topic graph per topic (possibly empty): the union of the input
/// graphs restricted to nodes that are members of that topic. An edge is
/// kept only when both endpoints are members.
pub fn topic_graphs_from(graphs: &[SocialGraph], k: usize, members: &[TopicMembership]) -> Vec<TopicGraph> {
    let merged = SocialGraph::merge(graphs);
    let mut by_topic: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); k];
    for m in members {
        for &t in &m.members {
            if t < k {
                by_topic[t].insert(&m.doc_id);
            }
        }
    }
    by_topic
        .into_iter()
        .enumerate()
        .map(|(topic, keep)| TopicGraph {
            topic,
            graph: merged.induced(|n| keep.contains(n.id.as_str())),
        })
        .collect()
}

pub fn topic_graphs(graphs: &[SocialGraph], model: &TopicModel, eps_c: f64) -> Vec<TopicGraph> {
    let m = memberships(graphs, model, eps_c, MembershipRule::Posterior);
    topic_graphs_from(graphs, model.k, &m)
}
