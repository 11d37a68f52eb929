//! Veracity checking: classify each post's content and strip posts judged
//! fake from the social graph.

mod datasets;
mod linear;
mod remote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Veracity;
use crate::socialgraph::{remove_nodes, GraphError, SocialGraph};
use crate::textprep::CleanDoc;

pub use datasets::{load_labeled_tsv, load_liar, LabeledText};
pub use linear::{classify, train_linear, LabeledDoc, LinearFakeNewsModel, TrainConfig, TrainReport};
pub use remote::{classify_remote, Fallback, RemoteClassifier, RemoteClassifierSpec, RemoteStats};

/// Posts scoring strictly above this are fake.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum VeracityError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus holds a single class")]
    SingleClassCorpus,
    #[error("train fraction {0} outside (0, 1)")]
    BadSplit(f64),
    #[error("model has {weights} weights for {vocab} vocabulary terms")]
    VocabularyMismatch { weights: usize, vocab: usize },
    #[error("classifier timed out")]
    Timeout,
    #[error("classifier response malformed: {0}")]
    BadResponse(String),
    #[error("classifier unreachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("dataset: {0}")]
    Dataset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeracityVerdict {
    pub doc_id: String,
    /// `Unchecked` only when a remote classifier failed and its fallback
    /// says so.
    pub label: Veracity,
    /// Probability of fake.
    pub score: f64,
}

impl VeracityVerdict {
    pub fn from_score(doc_id: impl Into<String>, score: f64) -> Self {
        let label = if score > DECISION_THRESHOLD {
            Veracity::Fake
        } else {
            Veracity::Real
        };
        Self {
            doc_id: doc_id.into(),
            label,
            score,
        }
    }
}

/// Anything that can judge one post. Implementations are shared across
/// threads and must be pure per snapshot.
pub trait Classifier: Send + Sync {
    fn judge(&self, doc_id: &str, doc: &CleanDoc, raw_text: &str)
        -> Result<VeracityVerdict, VeracityError>;
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn judge(
        &self,
        doc_id: &str,
        doc: &CleanDoc,
        raw_text: &str,
    ) -> Result<VeracityVerdict, VeracityError> {
        (**self).judge(doc_id, doc, raw_text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub graphs: Vec<SocialGraph>,
    /// One verdict per input node, in graph then node order.
    pub verdicts: Vec<VeracityVerdict>,
}

impl Filtered {
    pub fn removed(&self) -> impl Iterator<Item = &VeracityVerdict> {
        self.verdicts.iter().filter(|v| v.label == Veracity::Fake)
    }
}

/// Classifies every node and removes the fake ones with their edges.
pub fn filter_graph(
    graphs: &[SocialGraph],
    classifier: &dyn Classifier,
) -> Result<Filtered, VeracityError> {
    let mut out = Vec::with_capacity(graphs.len());
    let mut verdicts = Vec::new();
    for g in graphs {
        let mut doomed = BTreeSet::new();
        for n in g.nodes() {
            let v = classifier.judge(&n.id, &n.content, &n.text)?;
            if v.label == Veracity::Fake {
                doomed.insert(n.id.clone());
            }
            verdicts.push(v);
        }
        out.push(remove_nodes(g, &doomed)?);
    }
    Ok(Filtered {
        graphs: out,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoloc::GeoPoint;
    use crate::socialgraph::Node;
    use chrono::{DateTime, Utc};

    struct ByText;

    impl Classifier for ByText {
        fn judge(&self, id: &str, _: &CleanDoc, text: &str) -> Result<VeracityVerdict, VeracityError> {
            Ok(VeracityVerdict::from_score(id, if text == "fake" { 1.0 } else { 0.0 }))
        }
    }

    fn node(id: &str, text: &str) -> Node {
        Node {
            id: id.into(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            text: text.into(),
            content: CleanDoc::new(id, vec![]),
            loc: GeoPoint::unresolved(),
        }
    }

    #[test]
    fn fake_middle_splits_path() {
        let g = SocialGraph::from_parts(
            [node("a", "ok"), node("b", "fake"), node("c", "ok")],
            [("a".into(), "b".into()), ("b".into(), "c".into())],
        );
        let f = filter_graph(&[g], &ByText).unwrap();
        assert_eq!(f.graphs[0].components(), [vec!["a"], vec!["c"]]);
        assert_eq!(f.graphs[0].edge_count(), 0);
        assert_eq!(f.removed().count(), 1);
    }

    #[test]
    fn all_real_is_identity() {
        let g = SocialGraph::from_parts(
            [node("a", "ok"), node("b", "ok")],
            [("a".into(), "b".into())],
        );
        let f = filter_graph(std::slice::from_ref(&g), &ByText).unwrap();
        assert_eq!(f.graphs, [g]);
    }

    #[test]
    fn threshold_boundary_is_real() {
        assert_eq!(VeracityVerdict::from_score("x", 0.5).label, Veracity::Real);
        assert_eq!(VeracityVerdict::from_score("x", 0.500001).label, Veracity::Fake);
    }
}
