use std::collections::BTreeSet;
use std::time::Instant;

use contcomm_core::geoloc::GeoPoint;
use contcomm_core::socialgraph::{Node, SocialGraph};
use contcomm_core::textprep::{CleanDoc, Vocabulary};
use contcomm_core::topics::{
    coherence_cv_words, memberships, topic_graphs, topic_graphs_from, MembershipRule, OldaConfig, Prior,
    TopicError, TopicMembership, TopicModel,
};
use chrono::{DateTime, Utc};
use proptest::prelude::{prop_assert, proptest};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Planted generator: `k` topic-word distributions over `v` words drawn from
/// a sparse Dirichlet, documents drawn from the LDA generative process.
struct Planted {
    beta: Vec<Vec<f64>>,
    docs: Vec<CleanDoc>,
}

fn word(i: usize) -> String {
    format!("w{i:03}")
}

fn planted(seed: u64, k: usize, v: usize, n_docs: usize, doc_len: usize) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<Vec<f64>> = (0..k).map(|_| dirichlet(0.05, v, &mut rng)).collect();
    let docs = (0..n_docs)
        .map(|d| {
            let theta = dirichlet(0.2, k, &mut rng);
            let toks = (0..doc_len)
                .map(|_| {
                    let z = sample(&theta, &mut rng);
                    word(sample(&beta[z], &mut rng))
                })
                .collect();
            CleanDoc::new(format!("d{d}"), toks)
        })
        .collect();
    Planted { beta, docs }
}

/// Symmetric Dirichlet draw as normalized Gamma variates.
fn dirichlet(a: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let g = Gamma::new(a, 1.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| g.sample(rng).max(1e-300)).collect();
    let s: f64 = x.iter().sum();
    x.into_iter().map(|v| v / s).collect()
}

fn sample(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn top10(row: &[f64], name: impl Fn(usize) -> String) -> BTreeSet<String> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    idx.into_iter().take(10).map(name).collect()
}

/// Maximum-weight assignment by exhaustive search over permutations.
fn best_assignment(score: &[Vec<usize>]) -> Vec<usize> {
    fn go(score: &[Vec<usize>], row: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, best: &mut (usize, Vec<usize>)) {
        if row == score.len() {
            let total = cur.iter().enumerate().map(|(i, &j)| score[i][j]).sum();
            if total > best.0 || best.1.is_empty() {
                *best = (total, cur.clone());
            }
            return;
        }
        for j in 0..score.len() {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                go(score, row + 1, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, Vec::new());
    go(score, 0, &mut vec![false; score.len()], &mut Vec::new(), &mut best);
    best.1
}

fn config(k: usize, seed: u64) -> OldaConfig {
    OldaConfig {
        k,
        seed,
        ..Default::default()
    }
}

#[test]
fn planted_topics_are_recovered() {
    let started = Instant::now();
    let p = planted(7, 3, 500, 3000, 40);
    let vocab = Vocabulary::build(&p.docs, None).unwrap();
    let mut m = TopicModel::new(vocab, config(3, 1)).unwrap();
    m.fit_passes(&p.docs, 256, 5).unwrap();
    let learned: Vec<BTreeSet<String>> = (0..3)
        .map(|t| m.top_words(t, 10).into_iter().map(|(w, _)| w).collect())
        .collect();
    let truth: Vec<BTreeSet<String>> = p.beta.iter().map(|b| top10(b, word)).collect();
    let score: Vec<Vec<usize>> = truth
        .iter()
        .map(|t| learned.iter().map(|l| t.intersection(l).count()).collect())
        .collect();
    let assign = best_assignment(&score);
    for (i, &j) in assign.iter().enumerate() {
        assert!(score[i][j] >= 6, "planted {i} overlaps learned {j} in {} words", score[i][j]);
    }
    assert!(started.elapsed().as_secs() < 120);
}

#[test]
fn assignment_oracle_finds_optimum() {
    let s = vec![vec![1, 9, 0], vec![8, 7, 0], vec![0, 0, 3]];
    assert_eq!(best_assignment(&s), vec![1, 0, 2]);
}

#[test]
fn uniform_single_topic_perplexity_is_vocabulary_size() {
    let p = planted(3, 2, 120, 200, 25);
    let vocab = Vocabulary::build(&p.docs, None).unwrap();
    let n = vocab.len() as f64;
    let m = TopicModel::uniform(vocab, config(1, 0)).unwrap();
    let px = m.perplexity(&p.docs).unwrap();
    assert!((px - n).abs() / n < 1e-9, "{px} vs {n}");
}

#[test]
fn training_perplexity_does_not_rise() {
    let p = planted(4, 3, 200, 400, 30);
    let vocab = Vocabulary::build(&p.docs, None).unwrap();
    let mut m = TopicModel::new(vocab, config(3, 2)).unwrap();
    let mut last = m.perplexity(&p.docs).unwrap();
    for i in 0..10 {
        m.fit_online(&p.docs).unwrap();
        let now = m.perplexity(&p.docs).unwrap();
        assert!(now <= last * 1.01, "fit {i}: {now} > {last}");
        last = now;
    }
}

#[test]
fn same_seed_same_model() {
    let p = planted(5, 3, 100, 300, 20);
    let vocab = Vocabulary::build(&p.docs, None).unwrap();
    let fit = || {
        let mut m = TopicModel::new(vocab.clone(), config(3, 9)).unwrap();
        for b in p.docs.chunks(64) {
            m.fit_online(b).unwrap();
        }
        m
    };
    let (a, b) = (fit(), fit());
    assert_eq!(a.topic_word(), b.topic_word());
    assert_eq!(a, b);
}

#[test]
fn empty_docs_skipped_but_counted() {
    let p = planted(6, 2, 50, 20, 10);
    let vocab = Vocabulary::build(&p.docs, None).unwrap();
    let mut m = TopicModel::new(vocab, config(2, 0)).unwrap();
    let before = m.clone();
    let stats = m.fit_online(&[CleanDoc::new("e", vec![]), CleanDoc::new("f", vec!["zzz".into()])]).unwrap();
    assert_eq!((stats.docs, stats.skipped_empty), (0, 2));
    assert_eq!(m.update_count, 1);
    assert_eq!(m.topic_word(), before.topic_word());
    let t = m.infer(&CleanDoc::new("e", vec![]), 0.5);
    assert_eq!(t.theta, vec![0.5, 0.5]);
}

#[test]
fn snapshot_roundtrip() {
    let p = planted(8, 2, 60, 50, 10);
    let vocab = Vocabulary::build(&p.docs, None).unwrap();
    let mut m = TopicModel::new(vocab, config(2, 0)).unwrap();
    m.fit_online(&p.docs).unwrap();
    let back = TopicModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.infer(&p.docs[0], 0.5), m.infer(&p.docs[0], 0.5));
    let report = m.report(10);
    assert_eq!(report.lines().count(), 2 * 11);
}

fn disjoint_model() -> TopicModel {
    let docs = vec![CleanDoc::new("v", ["a", "b", "c", "x", "y", "z"].map(String::from).to_vec())];
    let vocab = Vocabulary::build(&docs, None).unwrap();
    // Topic 0 on a,b,c; topic 1 on x,y,z.
    let mut lambda = vec![1e-3; 12];
    for i in 0..3 {
        lambda[i] = 100.0;
        lambda[6 + 3 + i] = 100.0;
    }
    let cfg = OldaConfig {
        k: 2,
        alpha: Prior::Symmetric(0.5),
        ..Default::default()
    };
    TopicModel::from_lambda(vocab, cfg, lambda).unwrap()
}

#[test]
fn pure_topic_doc_is_dominated_by_that_topic() {
    let m = disjoint_model();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..20 {
        let toks = (0..rng.random_range(10..40)).map(|_| ["a", "b", "c"][rng.random_range(0..3)].to_string()).collect();
        let t = m.infer(&CleanDoc::new(i.to_string(), toks), 0.5);
        assert!(t.theta[0] > 0.9, "{:?}", t.theta);
        assert_eq!(t.members, BTreeSet::from([0]));
    }
}

fn node(id: String, toks: Vec<String>) -> Node {
    Node {
        content: CleanDoc::new(&id, toks),
        id,
        created_at: DateTime::<Utc>::UNIX_EPOCH,
        text: String::new(),
        loc: GeoPoint::unresolved(),
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> SocialGraph {
    let words = ["a", "b", "c", "x", "y", "z"];
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let len = rng.random_range(0..6);
            node(format!("n{i:03}"), (0..len).map(|_| words[rng.random_range(0..6)].to_string()).collect())
        })
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        if rng.random_bool(0.6) {
            edges.push((format!("n{i:03}"), format!("n{:03}", rng.random_range(0..i))));
        }
    }
    SocialGraph::from_parts(nodes, edges)
}

#[test]
fn topic_graphs_match_brute_force_filter() {
    let m = disjoint_model();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let g = random_graph(&mut rng, 100);
        let gamma = g.split_components();
        let out = topic_graphs(&gamma, &m, 0.5);
        assert_eq!(out.len(), 2);
        for tg in &out {
            let member: BTreeSet<String> = g
                .nodes()
                .filter(|n| m.infer(&n.content, 0.5).theta[tg.topic] >= 0.5)
                .map(|n| n.id.clone())
                .collect();
            let got: BTreeSet<String> = tg.graph.node_ids().cloned().collect();
            assert_eq!(got, member);
            let want_edges: BTreeSet<(String, String)> = g
                .edges()
                .filter(|(a, b)| member.contains(a) && member.contains(b))
                .cloned()
                .collect();
            assert_eq!(tg.graph.edges().cloned().collect::<BTreeSet<_>>(), want_edges);
        }
    }
}

proptest! {
    #[test]
    fn topic_graphs_permutation_invariant(seed in 0u64..5000, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 40);
        let mems: Vec<TopicMembership> = g.node_ids().map(|id| TopicMembership {
            doc_id: id.clone(),
            theta: vec![],
            members: (0..k).filter(|_| rng.random_bool(0.3)).collect(),
        }).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let relabeled: Vec<TopicMembership> = mems.iter().map(|m| TopicMembership {
            members: m.members.iter().map(|&t| perm[t]).collect(),
            ..m.clone()
        }).collect();
        let a = topic_graphs_from(std::slice::from_ref(&g), k, &mems);
        let b = topic_graphs_from(std::slice::from_ref(&g), k, &relabeled);
        for t in 0..k {
            prop_assert!(a[t].graph == b[perm[t]].graph);
        }
        let with_members: BTreeSet<&String> = mems.iter().filter(|m| !m.members.is_empty()).map(|m| &m.doc_id).collect();
        for tg in &a {
            prop_assert!(tg.graph.node_ids().all(|id| with_members.contains(id)));
        }
    }

    #[test]
    fn fits_stay_on_simplex(seed in 0u64..1000, batches in 1usize..4) {
        let p = planted(seed, 2, 40, 30, 8);
        let vocab = Vocabulary::build(&p.docs, None).unwrap();
        let mut m = TopicModel::new(vocab, config(3, seed)).unwrap();
        for b in 0..batches {
            m.fit_online(&p.docs[b * 10..(b + 1) * 10]).unwrap();
            for row in m.topic_word().chunks(m.n_terms()) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|x| *x > 0.0));
            }
            prop_assert!(m.alpha.iter().chain(&m.eta).all(|x| *x > 0.0));
        }
        for d in &p.docs {
            let t = m.infer(d, 0.5);
            prop_assert!((t.theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn cosine_rule_is_available() {
    let m = disjoint_model();
    let g = SocialGraph::from_parts([node("p".into(), vec!["x".into(), "y".into()])], []);
    let mem = memberships(&[g], &m, 0.5, MembershipRule::Cosine);
    assert_eq!(mem[0].members, BTreeSet::from([1]));
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|s| s.to_string()).collect()
}

#[test]
fn cv_perfect_cooccurrence_is_one() {
    let reference: Vec<CleanDoc> = (0..50)
        .map(|i| CleanDoc::new(i.to_string(), words(&["flood", "levee", "filler", "flood"])))
        .chain((0..30).map(|i| CleanDoc::new(format!("o{i}"), words(&["storm", "wind"]))))
        .collect();
    let r = coherence_cv_words(&[words(&["flood", "levee"]), words(&["storm", "wind"])], &reference).unwrap();
    assert!((r.mean - 1.0).abs() < 1e-6, "{r:?}");
}

#[test]
fn cv_disjoint_words_hit_the_floor() {
    let reference: Vec<CleanDoc> = (0..20)
        .map(|i| CleanDoc::new(i.to_string(), words(&[if i % 2 == 0 { "flood" } else { "drought" }])))
        .collect();
    let r = coherence_cv_words(&[words(&["flood", "drought"])], &reference).unwrap();
    // Hand computation: p = 1/2 each, joint 0.
    let eps = 1e-12f64;
    let cross = (eps / 0.25).ln() / -(eps.ln());
    let own = ((0.5 + eps) / 0.25).ln() / -((0.5 + eps).ln());
    let total = own + cross;
    let cos = (own * total + cross * total) / ((own * own + cross * cross).sqrt() * (2.0 * total * total).sqrt());
    assert!((r.mean - cos).abs() < 1e-12, "{} vs {cos}", r.mean);
    assert!(r.mean < 0.05);
}

#[test]
fn cv_missing_word_is_an_error() {
    let reference = vec![CleanDoc::new("a", words(&["flood"]))];
    let err = coherence_cv_words(&[words(&["flood", "tsunami"])], &reference).unwrap_err();
    assert_eq!(err, TopicError::InsufficientReference("tsunami".into()));
}

#[test]
fn planted_topics_are_more_coherent_than_shuffled_lists() {
    let p = planted(12, 3, 300, 1500, 30);
    let good: Vec<Vec<String>> = p.beta.iter().map(|b| top10(b, word).into_iter().collect()).collect();
    let mut pool: Vec<String> = good.iter().flatten().cloned().collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let mixed: Vec<Vec<String>> = pool.chunks(10).map(|c| c.to_vec()).collect();
    let g = coherence_cv_words(&good, &p.docs).unwrap().mean;
    let b = coherence_cv_words(&mixed, &p.docs).unwrap().mean;
    assert!(g > b, "{g} <= {b}");
}
