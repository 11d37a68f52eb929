#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::{DateTime, TimeZone, Utc};
use contcomm_core::communities::{area_id, CommunityGraph, GeoCluster};
use contcomm_core::socialgraph::{Node, SocialGraph};
use contcomm_core::{CleanDoc, Coord, GeoPoint, TweetRecord, Veracity};
use contcomm_gateway::PipelineConfig;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn core_data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

pub fn read_records(path: &std::path::Path) -> Vec<TweetRecord> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| TweetRecord::from_json_line(l).unwrap())
        .collect()
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
}

/// Settings for the 20-post fixture: two topics, 50 km neighbourhoods.
pub fn e2e_config(dead_letter: PathBuf) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        k: 2,
        dead_letter,
        ..Default::default()
    };
    cfg.seeds.olda = 7;
    cfg
}

/// The communities planted in `e2e_20.jsonl`, worked out from the file
/// itself: posts share a theme when they share their vocabulary, share a
/// city when they lie on the same side of 45.5 N, and fake posts drop out.
/// Each theme maps to a set of city groups.
pub fn planted_communities(records: &[TweetRecord]) -> BTreeSet<BTreeSet<BTreeSet<String>>> {
    let theme = |r: &TweetRecord| -> BTreeSet<String> { r.text.split_whitespace().map(str::to_string).collect() };
    let mut themes: Vec<BTreeSet<String>> = Vec::new();
    for r in records {
        let t = theme(r);
        if !themes.contains(&t) {
            themes.push(t);
        }
    }
    themes
        .iter()
        .map(|t| {
            [true, false]
                .into_iter()
                .map(|north| {
                    records
                        .iter()
                        .filter(|r| r.veracity != Veracity::Fake)
                        .filter(|r| &theme(r) == t)
                        .filter(|r| (r.coords.unwrap().lat > 45.5) == north)
                        .map(|r| r.id.clone())
                        .collect::<BTreeSet<String>>()
                })
                .filter(|g| g.len() >= 3)
                .collect::<BTreeSet<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

/// Groups community member sets by topic, for comparison with
/// [`planted_communities`] where topic numbering is arbitrary.
pub fn by_topic(communities: &[CommunityGraph]) -> BTreeSet<BTreeSet<BTreeSet<String>>> {
    let topics: BTreeSet<usize> = communities.iter().map(|c| c.topic).collect();
    topics
        .into_iter()
        .map(|t| {
            communities
                .iter()
                .filter(|c| c.topic == t)
                .map(|c| c.cluster.member_ids.iter().cloned().collect())
                .collect()
        })
        .collect()
}

pub fn node(id: &str, lat: f64, lon: f64) -> Node {
    Node {
        id: id.to_string(),
        created_at: t0(),
        text: String::new(),
        content: CleanDoc::new(id, vec![]),
        loc: GeoPoint::device(lat, lon),
    }
}

/// A community of `topic` whose members sit on a small grid around
/// (`lat`, `lon`).
pub fn community(topic: usize, ids: &[&str], lat: f64, lon: f64) -> CommunityGraph {
    let mut sorted: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    sorted.sort();
    let nodes: Vec<Node> = sorted
        .iter()
        .enumerate()
        .map(|(i, id)| node(id, lat + 0.01 * (i % 3) as f64, lon + 0.01 * (i / 3) as f64))
        .collect();
    let core_points = nodes.iter().map(|n| n.loc.coord().unwrap()).collect::<Vec<Coord>>();
    CommunityGraph {
        topic,
        area_id: area_id(&sorted),
        cluster: GeoCluster {
            cluster_id: 0,
            topic,
            core_points,
            member_ids: sorted.clone(),
        },
        graph: SocialGraph::from_parts(nodes, Vec::new()),
    }
}
