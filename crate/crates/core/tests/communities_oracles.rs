use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use contcomm_core::communities::{
    calinski_harabasz, community_graphs, davies_bouldin, dbscan, silhouette, CommunityError,
};
use contcomm_core::geoloc::{Coord, GeoPoint};
use contcomm_core::socialgraph::{Node, SocialGraph};
use contcomm_core::textprep::CleanDoc;
use contcomm_core::topics::TopicGraph;
use proptest::prelude::{prop_assert, proptest};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const R: f64 = 6371.0088;

/// Independent great-circle distance via the spherical law of cosines on
/// unit vectors (atan2 form for small-angle stability).
fn dist(a: Coord, b: Coord) -> f64 {
    let (u, v) = (unit(a), unit(b));
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let cn = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    R * cn.atan2(dot)
}

fn unit(c: Coord) -> [f64; 3] {
    let (p, l) = (c.lat.to_radians(), c.lon.to_radians());
    [p.cos() * l.cos(), p.cos() * l.sin(), p.sin()]
}

fn mean_point(pts: &[Coord]) -> Coord {
    let mut s = [0.0; 3];
    for p in pts {
        let u = unit(*p);
        (0..3).for_each(|i| s[i] += u[i]);
    }
    let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    Coord::new((s[2] / n).asin().to_degrees(), s[1].atan2(s[0]).to_degrees())
}

/// Textbook DBSCAN with an all-pairs neighbor scan, same scan-order
/// convention for border points.
fn naive_dbscan(pts: &[Coord], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = pts.len();
    let nb = |i: usize| (0..n).filter(|&j| dist(pts[i], pts[j]) <= eps).collect::<Vec<_>>();
    let mut label = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if label[i].is_some() || nb(i).len() < min_pts {
            continue;
        }
        label[i] = Some(next);
        let mut queue = std::collections::VecDeque::from([i]);
        while let Some(q) = queue.pop_front() {
            let nq = nb(q);
            if nq.len() < min_pts {
                continue;
            }
            for r in nq {
                if label[r].is_none() {
                    label[r] = Some(next);
                    queue.push_back(r);
                }
            }
        }
        next += 1;
    }
    label
}

/// Core points grouped by union-find over core-core links.
fn core_partition(pts: &[Coord], eps: f64, min_pts: usize) -> BTreeSet<BTreeSet<usize>> {
    let n = pts.len();
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(pts[i], pts[j]) <= eps).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && dist(pts[i], pts[j]) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(i);
    }
    groups.into_values().collect()
}

fn blobs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Coord> {
    let centers: Vec<Coord> = (0..rng.random_range(2..7))
        .map(|_| Coord::new(rng.random_range(-60.0..60.0), rng.random_range(-179.0..179.0)))
        .collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                Coord::new(rng.random_range(-70.0..70.0), rng.random_range(-180.0..180.0))
            } else {
                let c = centers[rng.random_range(0..centers.len())];
                Coord::new(c.lat + rng.random_range(-0.6..0.6), c.lon + rng.random_range(-0.6..0.6))
            }
        })
        .collect()
}

#[test]
fn dbscan_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for round in 0..40 {
        let pts = blobs(&mut rng, 300);
        let eps = rng.random_range(5.0..80.0);
        let min_pts = rng.random_range(1..8);
        let got = dbscan(&pts, eps, min_pts);
        assert_eq!(got.labels, naive_dbscan(&pts, eps, min_pts), "round {round}");
        let cores: BTreeSet<BTreeSet<usize>> =
            got.cores.iter().map(|c| c.iter().copied().collect()).collect();
        assert_eq!(cores, core_partition(&pts, eps, min_pts));
        // Every member lies within eps of a core point of its own cluster.
        for (m, k) in got.members.iter().zip(&got.cores) {
            for &i in m {
                assert!(k.iter().any(|&j| dist(pts[i], pts[j]) <= eps + 1e-9));
            }
        }
    }
}

#[test]
fn near_antimeridian_points_cluster() {
    let pts = [Coord::new(10.0, 179.9), Coord::new(10.0, -179.9), Coord::new(10.05, 179.95)];
    let r = dbscan(&pts, 50.0, 3);
    assert_eq!(r.members, vec![vec![0, 1, 2]]);
}

/// Equal within 1e-9 (relative above 1); infinities must match exactly.
fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn shrinking_eps_never_merges_core_points(seed in 0u64..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = blobs(&mut rng, 120);
        let big = dbscan(&pts, 60.0, 3);
        for eps in [40.0, 20.0, 5.0] {
            let small = dbscan(&pts, eps, 3);
            for k in &small.cores {
                let owners: BTreeSet<Option<usize>> = k.iter().map(|&i| big.labels[i]).collect();
                prop_assert!(owners.len() == 1 && !owners.contains(&None));
            }
        }
    }

    #[test]
    fn metrics_ignore_labels_and_order(seed in 0u64..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..5);
        let mut clusters: Vec<Vec<Coord>> = (0..k)
            .map(|_| {
                let c = Coord::new(rng.random_range(-50.0..50.0), rng.random_range(-170.0..170.0));
                (0..rng.random_range(1..8))
                    .map(|_| Coord::new(c.lat + rng.random_range(-1.0..1.0), c.lon + rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let (db, ch, si) = (
            davies_bouldin(&clusters).unwrap(),
            calinski_harabasz(&clusters).unwrap(),
            silhouette(&clusters).unwrap(),
        );
        clusters.shuffle(&mut rng);
        for c in clusters.iter_mut() {
            c.shuffle(&mut rng);
        }
        prop_assert!(close(davies_bouldin(&clusters).unwrap(), db));
        prop_assert!(close(calinski_harabasz(&clusters).unwrap(), ch));
        prop_assert!((silhouette(&clusters).unwrap() - si).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&si));
    }
}

fn toy() -> Vec<Vec<Coord>> {
    vec![
        vec![Coord::new(0.0, 0.0), Coord::new(0.0, 0.2), Coord::new(0.1, 0.1)],
        vec![Coord::new(5.0, 5.0), Coord::new(5.3, 5.0)],
    ]
}

#[test]
fn davies_bouldin_matches_hand_formula() {
    let cl = toy();
    let cents: Vec<Coord> = cl.iter().map(|c| mean_point(c)).collect();
    let s: Vec<f64> = cl
        .iter()
        .zip(&cents)
        .map(|(c, m)| c.iter().map(|p| dist(*p, *m)).sum::<f64>() / c.len() as f64)
        .collect();
    let want = (s[0] + s[1]) / dist(cents[0], cents[1]);
    assert!((davies_bouldin(&cl).unwrap() - want).abs() < 1e-9);
}

#[test]
fn calinski_harabasz_matches_hand_formula() {
    let cl = toy();
    let all: Vec<Coord> = cl.iter().flatten().copied().collect();
    let g = mean_point(&all);
    let (mut b, mut w) = (0.0, 0.0);
    for c in &cl {
        let m = mean_point(c);
        b += c.len() as f64 * dist(m, g).powi(2);
        w += c.iter().map(|p| dist(*p, m).powi(2)).sum::<f64>();
    }
    let want = (b / 1.0) / (w / 3.0);
    let got = calinski_harabasz(&cl).unwrap();
    assert!((got - want).abs() / want < 1e-6, "{got} vs {want}");
}

#[test]
fn calinski_harabasz_explodes_for_tight_far_clusters() {
    let cl = vec![
        vec![Coord::new(0.0, 0.0), Coord::new(0.0, 0.0001)],
        vec![Coord::new(40.0, 40.0), Coord::new(40.0001, 40.0)],
    ];
    assert!(calinski_harabasz(&cl).unwrap() > 1e6);
    assert_eq!(calinski_harabasz(&cl[..1]), Err(CommunityError::TooFewClusters(1)));
}

#[test]
fn silhouette_hand_check_and_adversarial_layout() {
    let cl = toy();
    let mut total = 0.0;
    for (ci, c) in cl.iter().enumerate() {
        for (pi, p) in c.iter().enumerate() {
            let a = c.iter().enumerate().filter(|(q, _)| *q != pi).map(|(_, q)| dist(*p, *q)).sum::<f64>() / (c.len() - 1) as f64;
            let o = &cl[1 - ci];
            let b = o.iter().map(|q| dist(*p, *q)).sum::<f64>() / o.len() as f64;
            total += (b - a) / a.max(b);
        }
    }
    assert!((silhouette(&cl).unwrap() - total / 5.0).abs() < 1e-9);

    // Each cluster holds one point from each of two far-apart sites.
    let swapped = vec![
        vec![Coord::new(0.0, 0.0), Coord::new(30.0, 30.0)],
        vec![Coord::new(0.0, 0.01), Coord::new(30.0, 30.01)],
    ];
    assert!(silhouette(&swapped).unwrap() < 0.0);
}

fn node(id: &str, lat: f64, lon: f64) -> Node {
    Node {
        id: id.into(),
        created_at: DateTime::<Utc>::UNIX_EPOCH,
        text: String::new(),
        content: CleanDoc::new(id, vec![]),
        loc: GeoPoint::device(lat, lon),
    }
}

#[test]
fn five_point_topic_graph_gives_two_communities() {
    let nodes = [
        node("a", 40.0, -3.7),
        node("b", 40.02, -3.7),
        node("c", 40.0, -3.68),
        node("d", 48.85, 2.35),
        node("e", 48.86, 2.36),
    ];
    let edges = [("a", "b"), ("c", "d"), ("d", "e")].map(|(x, y)| (x.to_string(), y.to_string()));
    let tg = TopicGraph {
        topic: 4,
        graph: SocialGraph::from_parts(nodes, edges),
    };
    let cs = community_graphs(&tg, 50.0, 2);
    assert_eq!(cs.len(), 2);
    assert_eq!(cs[0].cluster.member_ids, ["a", "b", "c"]);
    assert_eq!(cs[1].cluster.member_ids, ["d", "e"]);
    assert_eq!(cs[0].graph.edge_count(), 1);
    assert_eq!(cs[1].graph.edge_count(), 1);
    assert!(cs.iter().all(|c| c.topic == 4));
    let ids: Vec<&String> = cs.iter().flat_map(|c| c.graph.node_ids()).collect();
    assert_eq!(ids.len(), ids.iter().collect::<BTreeSet<_>>().len());
}

#[test]
fn degenerate_topic_graphs() {
    let same = TopicGraph {
        topic: 0,
        graph: SocialGraph::from_parts((0..6).map(|i| node(&format!("n{i}"), 1.0, 1.0)), []),
    };
    let cs = community_graphs(&same, 50.0, 6);
    assert_eq!(cs.len(), 1);
    assert_eq!(cs[0].graph.len(), 6);
    assert_eq!(cs[0].radius_km(), 0.0);

    let empty = TopicGraph {
        topic: 0,
        graph: SocialGraph::default(),
    };
    assert!(community_graphs(&empty, 50.0, 3).is_empty());

    let unresolved = TopicGraph {
        topic: 0,
        graph: SocialGraph::from_parts(
            [Node {
                loc: GeoPoint::unresolved(),
                ..node("u", 0.0, 0.0)
            }],
            [],
        ),
    };
    assert!(community_graphs(&unresolved, 50.0, 1).is_empty());
}

