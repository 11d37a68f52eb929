//! Undirected graph over posts. Retweets and replies link a post to the one
//! it references; connected components group the conversations.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TweetRecord;
use crate::geoloc::GeoPoint;
use crate::textprep::CleanDoc;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no content for node {0}")]
    MissingContent(String),
    #[error("no location for node {0}")]
    MissingLocation(String),
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub content: CleanDoc,
    pub loc: GeoPoint,
}

/// A reference to a post that is not part of the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingRef {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SocialGraph {
    nodes: BTreeMap<String, Node>,
    // Stored with the smaller id first.
    edges: BTreeSet<(String, String)>,
    components: Vec<Vec<String>>,
}

fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl SocialGraph {
    /// Assembles a graph from nodes and edges. Edges touching unknown nodes
    /// and self-loops are dropped.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        let nodes: BTreeMap<String, Node> = nodes.into_iter().map(|n| (n.id.clone(), n)).collect();
        let edges = edges
            .into_iter()
            .filter(|(a, b)| a != b && nodes.contains_key(a) && nodes.contains_key(b))
            .map(|(a, b)| edge_key(&a, &b))
            .collect();
        let mut g = Self {
            nodes,
            edges,
            components: Vec::new(),
        };
        g.components = components_of(&g.nodes, &g.edges);
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &String> {
        self.nodes.keys()
    }

    /// Edges as `(smaller id, larger id)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = &(String, String)> {
        self.edges.iter()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&edge_key(a, b))
    }

    pub fn components(&self) -> &[Vec<String>] {
        &self.components
    }

    /// The subgraph induced by the nodes accepted by `keep`: edges survive
    /// only when both endpoints do.
    pub fn induced(&self, mut keep: impl FnMut(&Node) -> bool) -> SocialGraph {
        let nodes: BTreeMap<String, Node> = self
            .nodes
            .iter()
            .filter(|(_, n)| keep(n))
            .map(|(k, n)| (k.clone(), n.clone()))
            .collect();
        let edges: BTreeSet<(String, String)> = self
            .edges
            .iter()
            .filter(|(a, b)| nodes.contains_key(a) && nodes.contains_key(b))
            .cloned()
            .collect();
        let components = components_of(&nodes, &edges);
        SocialGraph {
            nodes,
            edges,
            components,
        }
    }

    /// One graph per connected component, in component order.
    pub fn split_components(&self) -> Vec<SocialGraph> {
        self.components
            .iter()
            .map(|c| {
                let members: BTreeSet<&str> = c.iter().map(String::as_str).collect();
                self.induced(|n| members.contains(n.id.as_str()))
            })
            .collect()
    }

    /// Union of disjoint graphs.
    pub fn merge(graphs: &[SocialGraph]) -> SocialGraph {
        SocialGraph::from_parts(
            graphs.iter().flat_map(|g| g.nodes.values().cloned()),
            graphs.iter().flat_map(|g| g.edges.iter().cloned()),
        )
    }

    /// Edge list, one `u<TAB>v` per line.
    pub fn dump_edges(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.edges {
            let _ = writeln!(out, "{a}\t{b}");
        }
        out
    }

    /// Node attributes as JSON lines.
    pub fn dump_nodes(&self) -> String {
        let mut out = String::new();
        for n in self.nodes.values() {
            out.push_str(&serde_json::to_string(n).expect("node serializes"));
            out.push('\n');
        }
        out
    }
}

/// Connected components by union-find, each sorted, ordered by smallest
/// member id.
fn components_of(
    nodes: &BTreeMap<String, Node>,
    edges: &BTreeSet<(String, String)>,
) -> Vec<Vec<String>> {
    let ids: Vec<&String> = nodes.keys().collect();
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, pos[a.as_str()]), find(&mut parent, pos[b.as_str()]));
        if ra != rb {
            // Keep the smaller index as root so roots follow id order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push((*id).clone());
    }
    // Ids were visited in sorted order, so each group is sorted and the
    // root is its smallest member.
    groups.into_values().collect()
}

/// Result of building a graph from a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Built {
    pub graph: SocialGraph,
    pub dangling: Vec<DanglingRef>,
}

/// One node per record; an edge wherever a record retweets or replies to
/// another record of the batch. References leaving the batch are reported.
pub fn build_graph(
    records: &[TweetRecord],
    contents: &HashMap<String, CleanDoc>,
    locs: &HashMap<String, GeoPoint>,
) -> Result<Built, GraphError> {
    let mut nodes = BTreeMap::new();
    for r in records {
        let content = contents
            .get(&r.id)
            .ok_or_else(|| GraphError::MissingContent(r.id.clone()))?;
        let loc = locs
            .get(&r.id)
            .ok_or_else(|| GraphError::MissingLocation(r.id.clone()))?;
        let node = Node {
            id: r.id.clone(),
            created_at: r.created_at,
            text: r.text.clone(),
            content: content.clone(),
            loc: *loc,
        };
        if nodes.insert(r.id.clone(), node).is_some() {
            return Err(GraphError::DuplicateNode(r.id.clone()));
        }
    }
    let mut edges = BTreeSet::new();
    let mut dangling = Vec::new();
    for r in records {
        for target in [&r.retweet_of, &r.reply_to].into_iter().flatten() {
            if target == &r.id {
                continue;
            }
            if nodes.contains_key(target) {
                edges.insert(edge_key(&r.id, target));
            } else {
                dangling.push(DanglingRef {
                    from: r.id.clone(),
                    to: target.clone(),
                });
            }
        }
    }
    let components = components_of(&nodes, &edges);
    Ok(Built {
        graph: SocialGraph {
            nodes,
            edges,
            components,
        },
        dangling,
    })
}

pub fn connected_components(g: &SocialGraph) -> Vec<Vec<String>> {
    g.components.clone()
}

/// A copy of `g` without `doomed` and without every edge touching them.
pub fn remove_nodes(g: &SocialGraph, doomed: &BTreeSet<String>) -> Result<SocialGraph, GraphError> {
    if let Some(unknown) = doomed.iter().find(|d| !g.contains(d)) {
        return Err(GraphError::UnknownNode(unknown.clone()));
    }
    Ok(g.induced(|n| !doomed.contains(&n.id)))
}

/// References to posts that have not arrived yet, kept for a window so a
/// late original can be linked when it shows up.
#[derive(Debug, Clone)]
pub struct PendingLinks {
    window: Duration,
    waiting: BTreeMap<String, Vec<(String, DateTime<Utc>)>>,
    queue: VecDeque<(DateTime<Utc>, String, String)>,
    relinked: u64,
    expired: u64,
}

impl PendingLinks {
    pub fn new(window: Duration) -> Self {
        Self {
            window,
            waiting: BTreeMap::new(),
            queue: VecDeque::new(),
            relinked: 0,
            expired: 0,
        }
    }

    pub fn add(&mut self, dangling: &DanglingRef, at: DateTime<Utc>) {
        let list = self.waiting.entry(dangling.to.clone()).or_default();
        if list.iter().any(|(f, _)| f == &dangling.from) {
            return;
        }
        list.push((dangling.from.clone(), at));
        self.queue.push_back((at, dangling.to.clone(), dangling.from.clone()));
    }

    /// Posts that were waiting for `id`, now linkable.
    pub fn arrived(&mut self, id: &str) -> Vec<String> {
        let from: Vec<String> = self
            .waiting
            .remove(id)
            .map(|v| v.into_iter().map(|(f, _)| f).collect())
            .unwrap_or_default();
        self.relinked += from.len() as u64;
        from
    }

    /// Drops references older than the window.
    pub fn expire(&mut self, now: DateTime<Utc>) {
        while let Some((at, to, from)) = self.queue.front().cloned() {
            if now - at <= self.window {
                break;
            }
            self.queue.pop_front();
            if let Some(list) = self.waiting.get_mut(&to) {
                let before = list.len();
                list.retain(|(f, t)| !(f == &from && *t == at));
                self.expired += (before - list.len()) as u64;
                if list.is_empty() {
                    self.waiting.remove(&to);
                }
            }
        }
    }

    pub fn pending(&self) -> usize {
        self.waiting.values().map(Vec::len).sum()
    }

    pub fn relinked(&self) -> u64 {
        self.relinked
    }

    pub fn expired(&self) -> u64 {
        self.expired
    }
}
