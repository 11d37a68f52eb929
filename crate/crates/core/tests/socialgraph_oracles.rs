use std::collections::{BTreeSet, HashMap, VecDeque};

use contcomm_core::geoloc::GeoPoint;
use contcomm_core::socialgraph::{build_graph, connected_components, remove_nodes, SocialGraph};
use contcomm_core::textprep::CleanDoc;
use contcomm_core::TweetRecord;
use proptest::prelude::{any, prop_assert_eq, proptest};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_records(rng: &mut impl Rng, n: usize) -> Vec<TweetRecord> {
    let link_p = rng.random_range(0.0..0.6);
    (0..n)
        .map(|i| {
            let mut b = TweetRecord::builder(format!("n{i:04}"), "rain");
            if i > 0 && rng.random_bool(link_p) {
                b = b.retweet_of(format!("n{:04}", rng.random_range(0..i)));
            }
            if rng.random_bool(link_p / 2.0) {
                // May point forward, backward, at itself or outside the batch.
                b = b.reply_to(format!("n{:04}", rng.random_range(0..n + 5)));
            }
            b.build()
        })
        .collect()
}

fn build(records: &[TweetRecord]) -> SocialGraph {
    let contents: HashMap<String, CleanDoc> = records
        .iter()
        .map(|r| (r.id.clone(), CleanDoc::new(&r.id, vec![])))
        .collect();
    let locs: HashMap<String, GeoPoint> = records
        .iter()
        .map(|r| (r.id.clone(), GeoPoint::unresolved()))
        .collect();
    build_graph(records, &contents, &locs).unwrap().graph
}

/// Edges straight from the record links, without the library.
fn raw_edges(records: &[TweetRecord]) -> BTreeSet<(String, String)> {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut out = BTreeSet::new();
    for r in records {
        for t in [&r.retweet_of, &r.reply_to].into_iter().flatten() {
            if t != &r.id && ids.contains(t.as_str()) {
                let (a, b) = if r.id < *t { (&r.id, t) } else { (t, &r.id) };
                out.insert((a.clone(), b.clone()));
            }
        }
    }
    out
}

fn bfs_components(ids: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> Vec<Vec<String>> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for start in ids {
        if seen.contains(start.as_str()) {
            continue;
        }
        let mut comp = vec![start.clone()];
        let mut q = VecDeque::from([start.as_str()]);
        seen.insert(start.as_str());
        while let Some(u) = q.pop_front() {
            for v in adj.get(u).into_iter().flatten() {
                if seen.insert(v) {
                    comp.push(v.to_string());
                    q.push_back(v);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort_by(|a, b| a[0].cmp(&b[0]));
    out
}

/// Minimum-label propagation until nothing changes.
fn label_components(ids: &BTreeSet<String>, edges: &BTreeSet<(String, String)>) -> Vec<Vec<String>> {
    let mut label: HashMap<&str, &str> = ids.iter().map(|i| (i.as_str(), i.as_str())).collect();
    loop {
        let mut changed = false;
        for (a, b) in edges {
            let (la, lb) = (label[a.as_str()], label[b.as_str()]);
            let m = la.min(lb);
            if la != m || lb != m {
                label.insert(a, m);
                label.insert(b, m);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: std::collections::BTreeMap<&str, Vec<String>> = Default::default();
    for id in ids {
        groups.entry(label[id.as_str()]).or_default().push(id.clone());
    }
    groups.into_values().collect()
}

#[test]
fn components_match_bfs_and_label_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.random_range(0..=500);
        let recs = random_records(&mut rng, n);
        let g = build(&recs);
        let ids: BTreeSet<String> = recs.iter().map(|r| r.id.clone()).collect();
        let edges = raw_edges(&recs);
        assert_eq!(g.edges().cloned().collect::<BTreeSet<_>>(), edges);
        let comps = connected_components(&g);
        assert_eq!(comps, bfs_components(&ids, &edges));
        assert_eq!(comps, label_components(&ids, &edges));
        assert_eq!(comps.iter().map(Vec::len).sum::<usize>(), g.len());
    }
}

#[test]
fn removal_matches_rebuild() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let n = rng.random_range(1..=300);
        let recs = random_records(&mut rng, n);
        let g = build(&recs);
        let p = rng.random_range(0.0..0.5);
        let doomed: BTreeSet<String> = recs
            .iter()
            .filter(|_| rng.random_bool(p))
            .map(|r| r.id.clone())
            .collect();
        let pruned = remove_nodes(&g, &doomed).unwrap();

        let survivors: Vec<TweetRecord> =
            recs.iter().filter(|r| !doomed.contains(&r.id)).cloned().collect();
        let rebuilt = build(&survivors);
        assert_eq!(pruned, rebuilt);
        assert!(pruned.edge_count() <= g.edge_count());
        // Never merges: every new component sits inside one old component.
        let old_of: HashMap<&String, usize> = g
            .components()
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |id| (id, i)))
            .collect();
        for c in pruned.components() {
            assert!(c.iter().all(|id| old_of[id] == old_of[&c[0]]));
        }
    }
}

proptest! {
    #[test]
    fn build_is_order_independent(seed in any::<u64>(), n in 0usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = random_records(&mut rng, n);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(build(&recs), build(&shuffled));
    }
}
