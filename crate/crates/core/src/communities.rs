//! Geolocation-content communities: DBSCAN over great-circle distance on the
//! nodes of each topic graph, plus cluster validity indices.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geoloc::{haversine_km, spherical_centroid, Coord, EARTH_RADIUS_KM};
use crate::hashing::Fnv1a;
use crate::socialgraph::SocialGraph;
use crate::topics::TopicGraph;

pub const DEFAULT_EPS_KM: f64 = 50.0;
pub const DEFAULT_MIN_PTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommunityError {
    #[error("need at least two clusters, got {0}")]
    TooFewClusters(usize),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
}

/// DBSCAN output over a slice of points. Indices refer to the input slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clustering {
    /// Cluster of each point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    /// Member indices per cluster, ascending.
    pub members: Vec<Vec<usize>>,
    /// Core point indices per cluster, ascending.
    pub cores: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn noise(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i].is_none()).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Radius queries backed by a latitude-sorted index: only points inside the
/// latitude band of the query can be within `eps_km`.
struct LatIndex<'a> {
    pts: &'a [Coord],
    by_lat: Vec<usize>,
    eps_km: f64,
    band_deg: f64,
}

impl<'a> LatIndex<'a> {
    fn new(pts: &'a [Coord], eps_km: f64) -> Self {
        let mut by_lat: Vec<usize> = (0..pts.len()).collect();
        by_lat.sort_by(|&a, &b| pts[a].lat.total_cmp(&pts[b].lat).then(a.cmp(&b)));
        let band_deg = (eps_km / EARTH_RADIUS_KM).to_degrees() * (1.0 + 1e-9);
        Self {
            pts,
            by_lat,
            eps_km,
            band_deg,
        }
    }

    /// Neighbors of `i` including itself, ascending.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = self.pts[i];
        let lo = self.by_lat.partition_point(|&j| self.pts[j].lat < p.lat - self.band_deg);
        let mut out: Vec<usize> = self.by_lat[lo..]
            .iter()
            .take_while(|&&j| self.pts[j].lat <= p.lat + self.band_deg)
            .copied()
            .filter(|&j| haversine_km(p, self.pts[j]) <= self.eps_km)
            .collect();
        out.sort_unstable();
        out
    }
}

/// DBSCAN with great-circle distance. A point is core when at least
/// `min_pts` points (itself included) lie within `eps_km`. Points are
/// scanned in input order; a border point reachable from several clusters
/// joins the first one that claims it.
pub fn dbscan(points: &[Coord], eps_km: f64, min_pts: usize) -> Clustering {
    assert!(eps_km > 0.0 && min_pts >= 1, "eps_km > 0 and min_pts >= 1 required");
    let n = points.len();
    let index = LatIndex::new(points, eps_km);
    let neighbors: Vec<Vec<usize>> = (0..n).into_par_iter().map(|i| index.neighbors(i)).collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut members = Vec::new();
    let mut cores = Vec::new();
    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        let c = members.len();
        let (mut m, mut k) = (Vec::new(), Vec::new());
        labels[start] = Some(c);
        let mut queue = VecDeque::from([start]);
        while let Some(q) = queue.pop_front() {
            m.push(q);
            if !is_core[q] {
                continue;
            }
            k.push(q);
            for &r in &neighbors[q] {
                if labels[r].is_none() {
                    labels[r] = Some(c);
                    queue.push_back(r);
                }
            }
        }
        m.sort_unstable();
        k.sort_unstable();
        members.push(m);
        cores.push(k);
    }
    Clustering {
        labels,
        members,
        cores,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoCluster {
    pub cluster_id: usize,
    pub topic: usize,
    pub core_points: Vec<Coord>,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityGraph {
    pub topic: usize,
    /// Stable hash of the sorted member ids.
    pub area_id: String,
    pub cluster: GeoCluster,
    pub graph: SocialGraph,
}

impl CommunityGraph {
    pub fn coords(&self) -> Vec<Coord> {
        self.graph.nodes().filter_map(|n| n.loc.coord()).collect()
    }

    pub fn centroid(&self) -> Option<Coord> {
        spherical_centroid(self.coords())
    }

    /// Largest distance from the centroid to a member.
    pub fn radius_km(&self) -> f64 {
        match self.centroid() {
            Some(c) => self.coords().into_iter().map(|p| dist(c, p)).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

pub fn area_id<S: AsRef<str>>(sorted_ids: &[S]) -> String {
    let mut h = Fnv1a::default();
    for id in sorted_ids {
        h.write(id.as_ref().as_bytes()).write(b"\n");
    }
    format!("{:016x}", h.finish())
}

/// One community per DBSCAN cluster of the topic graph's located nodes.
/// Nodes without a resolved location take no part; noise forms no
/// community.
pub fn community_graphs(tg: &TopicGraph, eps_km: f64, min_pts: usize) -> Vec<CommunityGraph> {
    let located: Vec<(&String, Coord)> = tg
        .graph
        .nodes()
        .filter_map(|n| n.loc.coord().map(|c| (&n.id, c)))
        .collect();
    let coords: Vec<Coord> = located.iter().map(|(_, c)| *c).collect();
    let clustering = dbscan(&coords, eps_km, min_pts);
    clustering
        .members
        .iter()
        .zip(&clustering.cores)
        .enumerate()
        .map(|(cid, (m, k))| {
            let ids: Vec<String> = m.iter().map(|&i| located[i].0.clone()).collect();
            let keep: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            let graph = tg.graph.induced(|n| keep.contains(n.id.as_str()));
            CommunityGraph {
                topic: tg.topic,
                area_id: area_id(&ids),
                cluster: GeoCluster {
                    cluster_id: cid,
                    topic: tg.topic,
                    core_points: k.iter().map(|&i| coords[i]).collect(),
                    member_ids: ids,
                },
                graph,
            }
        })
        .collect()
}

/// Communities of every topic graph, clustered in parallel and returned in
/// topic order.
pub fn all_communities(tgs: &[TopicGraph], eps_km: f64, min_pts: usize) -> Vec<CommunityGraph> {
    tgs.par_iter()
        .map(|tg| community_graphs(tg, eps_km, min_pts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityRecord {
    pub topic: usize,
    pub area_id: String,
    pub core_points: Vec<Coord>,
    pub member_ids: Vec<String>,
    pub centroid: Option<Coord>,
    pub radius_km: f64,
}

impl From<&CommunityGraph> for CommunityRecord {
    fn from(c: &CommunityGraph) -> Self {
        Self {
            topic: c.topic,
            area_id: c.area_id.clone(),
            core_points: c.cluster.core_points.clone(),
            member_ids: c.cluster.member_ids.clone(),
            centroid: c.centroid(),
            radius_km: c.radius_km(),
        }
    }
}

/// JSON array of community records, sorted by topic then area id.
pub fn community_report(cs: &[CommunityGraph]) -> String {
    let mut recs: Vec<CommunityRecord> = cs.iter().map(CommunityRecord::from).collect();
    recs.sort_by(|a, b| a.topic.cmp(&b.topic).then_with(|| a.area_id.cmp(&b.area_id)));
    serde_json::to_string_pretty(&recs).expect("records serialize")
}

fn check(clusters: &[Vec<Coord>]) -> Result<(), CommunityError> {
    if clusters.len() < 2 {
        return Err(CommunityError::TooFewClusters(clusters.len()));
    }
    match clusters.iter().position(Vec::is_empty) {
        Some(i) => Err(CommunityError::EmptyCluster(i)),
        None => Ok(()),
    }
}

/// Distances below a micrometre are rounding noise from the centroid
/// projection and count as zero.
fn dist(a: Coord, b: Coord) -> f64 {
    let d = haversine_km(a, b);
    if d < 1e-9 {
        0.0
    } else {
        d
    }
}

fn centroid(c: &[Coord]) -> Coord {
    // Antipodal cancellation only happens for contrived inputs; fall back
    // to the first point.
    spherical_centroid(c.iter().copied()).unwrap_or(c[0])
}

/// Davies-Bouldin index with great-circle distances to spherical
/// centroids. Two clusters with coincident centroids score infinity unless
/// both have zero scatter.
pub fn davies_bouldin(clusters: &[Vec<Coord>]) -> Result<f64, CommunityError> {
    check(clusters)?;
    let cents: Vec<Coord> = clusters.iter().map(|c| centroid(c)).collect();
    let scatter: Vec<f64> = clusters
        .iter()
        .zip(&cents)
        .map(|(c, m)| c.iter().map(|p| dist(*p, *m)).sum::<f64>() / c.len() as f64)
        .collect();
    let k = clusters.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in (0..k).filter(|&j| j != i) {
            let s = scatter[i] + scatter[j];
            let d = dist(cents[i], cents[j]);
            let r = if s == 0.0 {
                0.0
            } else if d == 0.0 {
                f64::INFINITY
            } else {
                s / d
            };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Calinski-Harabasz index with squared great-circle distances. Infinite
/// when every cluster has zero scatter.
pub fn calinski_harabasz(clusters: &[Vec<Coord>]) -> Result<f64, CommunityError> {
    check(clusters)?;
    let all: Vec<Coord> = clusters.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let k = clusters.len() as f64;
    let overall = centroid(&all);
    let mut between = 0.0;
    let mut within = 0.0;
    for c in clusters {
        let m = centroid(c);
        between += c.len() as f64 * dist(m, overall).powi(2);
        within += c.iter().map(|p| dist(*p, m).powi(2)).sum::<f64>();
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between * (n - k) / (within * (k - 1.0)))
}

/// Mean silhouette. Points in singleton clusters score 0.
pub fn silhouette(clusters: &[Vec<Coord>]) -> Result<f64, CommunityError> {
    check(clusters)?;
    let scores: Vec<f64> = clusters
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ci, c)| {
            c.iter().enumerate().map(move |(pi, p)| {
                if c.len() == 1 {
                    return 0.0;
                }
                let a = c
                    .iter()
                    .enumerate()
                    .filter(|(qi, _)| *qi != pi)
                    .map(|(_, q)| dist(*p, *q))
                    .sum::<f64>()
                    / (c.len() - 1) as f64;
                let b = clusters
                    .iter()
                    .enumerate()
                    .filter(|(oi, _)| *oi != ci)
                    .map(|(_, o)| o.iter().map(|q| dist(*p, *q)).sum::<f64>() / o.len() as f64)
                    .fold(f64::INFINITY, f64::min);
                let m = a.max(b);
                if m == 0.0 {
                    0.0
                } else {
                    (b - a) / m
                }
            })
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
    pub silhouette: f64,
    pub clusters: usize,
    pub points: usize,
}

pub fn validity(clusters: &[Vec<Coord>]) -> Result<Validity, CommunityError> {
    Ok(Validity {
        davies_bouldin: davies_bouldin(clusters)?,
        calinski_harabasz: calinski_harabasz(clusters)?,
        silhouette: silhouette(clusters)?,
        clusters: clusters.len(),
        points: clusters.iter().map(Vec::len).sum(),
    })
}
