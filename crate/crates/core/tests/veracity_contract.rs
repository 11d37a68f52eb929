use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use contcomm_core::geoloc::GeoPoint;
use contcomm_core::socialgraph::{build_graph, SocialGraph};
use contcomm_core::textprep::{CleanDoc, Vocabulary};
use contcomm_core::veracity::{
    classify, classify_remote, filter_graph, train_linear, Classifier, Fallback, LabeledDoc,
    LinearFakeNewsModel, RemoteClassifier, RemoteClassifierSpec, TrainConfig, VeracityError,
    VeracityVerdict,
};
use contcomm_core::{TweetRecord, Veracity};
use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
enum Reply {
    Body(&'static str),
    Status(u16),
    Stall(Duration),
}

type Seen = Arc<Mutex<Vec<(String, String)>>>;

/// Minimal HTTP/1.1 server answering every request with `reply` and
/// recording request bodies.
fn mock(reply: Reply) -> (String, Seen) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut content_type = String::new();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if let Some(v) = lower.strip_prefix("content-type:") {
                    content_type = v.trim().to_string();
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            log.lock().unwrap().push((content_type, String::from_utf8_lossy(&body).into_owned()));
            let (status, payload) = match &reply {
                Reply::Body(b) => (200, b.to_string()),
                Reply::Status(s) => (*s, String::new()),
                Reply::Stall(d) => {
                    std::thread::sleep(*d);
                    (200, r#"{"score":0.1}"#.to_string())
                }
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (format!("http://{addr}/classify"), seen)
}

fn spec(endpoint: String, fallback: Fallback) -> RemoteClassifierSpec {
    RemoteClassifierSpec {
        endpoint,
        timeout_ms: 300,
        fallback,
    }
}

#[test]
fn remote_score_above_threshold_is_fake() {
    let (url, seen) = mock(Reply::Body(r#"{"score":0.9}"#));
    let v = classify_remote("t1", "the \"flood\" is staged", &spec(url, Fallback::PassThrough)).unwrap();
    assert_eq!(v.label, Veracity::Fake);
    assert_eq!(v.score, 0.9);
    let seen = seen.lock().unwrap();
    assert!(seen[0].0.starts_with("application/json"));
    let sent: serde_json::Value = serde_json::from_str(&seen[0].1).unwrap();
    assert_eq!(sent, serde_json::json!({"id": "t1", "text": "the \"flood\" is staged"}));
}

#[test]
fn unreachable_endpoint_passes_through() {
    // Bind then drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = RemoteClassifier::new(spec(format!("http://127.0.0.1:{port}/"), Fallback::PassThrough)).unwrap();
    let v = c.classify("t", "x");
    assert_eq!((v.label, v.score), (Veracity::Real, 0.0));
    assert_eq!(c.stats().unreachable, 1);
}

#[test]
fn malformed_body_counts_bad_response() {
    let (url, _) = mock(Reply::Body("{not json"));
    let c = RemoteClassifier::new(spec(url, Fallback::PassThrough)).unwrap();
    assert!(matches!(c.call("t", "x"), Err(VeracityError::BadResponse(_))));
    let v = c.classify("t", "x");
    assert_eq!(v.label, Veracity::Real);
    assert_eq!(c.stats().bad_responses, 1);
}

#[test]
fn out_of_range_score_and_http_errors_are_bad_responses() {
    let (url, _) = mock(Reply::Body(r#"{"score":1.5}"#));
    let c = RemoteClassifier::new(spec(url, Fallback::MarkUnchecked)).unwrap();
    let v = c.classify("t", "x");
    assert_eq!(v.label, Veracity::Unchecked);
    assert_eq!(c.stats().bad_responses, 1);

    let (url, _) = mock(Reply::Status(500));
    let c = RemoteClassifier::new(spec(url, Fallback::PassThrough)).unwrap();
    assert!(matches!(c.call("t", "x"), Err(VeracityError::BadResponse(_))));
}

#[test]
fn slow_endpoint_times_out_into_fallback() {
    let (url, _) = mock(Reply::Stall(Duration::from_millis(1500)));
    let c = RemoteClassifier::new(spec(url, Fallback::MarkUnchecked)).unwrap();
    let started = std::time::Instant::now();
    let v = c.classify("t", "x");
    assert!(started.elapsed() < Duration::from_millis(1200));
    assert_eq!(v.label, Veracity::Unchecked);
    assert_eq!(c.stats().timeouts, 1);
}

#[test]
fn zero_timeout_is_rejected() {
    let s = RemoteClassifierSpec {
        endpoint: "http://127.0.0.1:1/".into(),
        timeout_ms: 0,
        fallback: Fallback::PassThrough,
    };
    assert!(RemoteClassifier::new(s).is_err());
}

/// Labels fixed per node id.
struct Labels(HashMap<String, bool>);

impl Classifier for Labels {
    fn judge(&self, id: &str, _: &CleanDoc, _: &str) -> Result<VeracityVerdict, VeracityError> {
        Ok(VeracityVerdict::from_score(id, if self.0[id] { 0.9 } else { 0.1 }))
    }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> (Vec<TweetRecord>, SocialGraph) {
    let recs: Vec<TweetRecord> = (0..n)
        .map(|i| {
            let mut b = TweetRecord::builder(format!("p{i:03}"), "rain");
            if i > 0 && rng.random_bool(0.5) {
                b = b.retweet_of(format!("p{:03}", rng.random_range(0..i)));
            }
            b.build()
        })
        .collect();
    let contents = recs.iter().map(|r| (r.id.clone(), CleanDoc::new(&r.id, vec![]))).collect();
    let locs = recs.iter().map(|r| (r.id.clone(), GeoPoint::unresolved())).collect();
    let g = build_graph(&recs, &contents, &locs).unwrap().graph;
    (recs, g)
}

#[test]
fn filtered_graphs_equal_rebuild_from_survivors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(0..120);
        let (recs, g) = random_graph(&mut rng, n);
        let p = rng.random_range(0.0..1.0);
        let labels: HashMap<String, bool> = recs.iter().map(|r| (r.id.clone(), rng.random_bool(p))).collect();
        let gamma = g.split_components();
        let out = filter_graph(&gamma, &Labels(labels.clone())).unwrap();

        let fake: BTreeSet<&String> = labels.iter().filter(|(_, f)| **f).map(|(k, _)| k).collect();
        let merged = SocialGraph::merge(&out.graphs);
        assert!(merged.node_ids().all(|id| !fake.contains(id)));
        assert!(merged.edges().all(|(a, b)| !fake.contains(a) && !fake.contains(b)));
        assert_eq!(merged.len() + fake.len(), g.len());

        let survivors: Vec<TweetRecord> = recs.iter().filter(|r| !labels[&r.id]).cloned().collect();
        let contents = survivors.iter().map(|r| (r.id.clone(), CleanDoc::new(&r.id, vec![]))).collect();
        let locs = survivors.iter().map(|r| (r.id.clone(), GeoPoint::unresolved())).collect();
        let oracle = build_graph(&survivors, &contents, &locs).unwrap().graph;
        assert_eq!(merged, oracle);
    }
}

fn doc(id: usize, toks: &[&str]) -> CleanDoc {
    CleanDoc::new(id.to_string(), toks.iter().map(|s| s.to_string()).collect())
}

proptest! {
    #[test]
    fn score_is_monotone_in_weight(w in -5.0f64..5.0, bump in 0.0f64..5.0, bias in -2.0f64..2.0) {
        let vocab = Vocabulary::build(&[doc(0, &["hoax", "rain", "dam"])], None).unwrap();
        let t = vocab.index_of("hoax").unwrap();
        let mut weights = vec![0.3, w, -0.7];
        let d = doc(1, &["hoax", "rain"]);
        let before = classify(&d, &LinearFakeNewsModel::new(vocab.clone(), weights.clone(), bias, "")).unwrap();
        weights[t] += bump;
        let after = classify(&d, &LinearFakeNewsModel::new(vocab, weights, bias, "")).unwrap();
        prop_assert!(after.score >= before.score);
    }

    #[test]
    fn filtered_output_has_no_fakes(seed in 0u64..10_000, n in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (recs, g) = random_graph(&mut rng, n);
        let labels: HashMap<String, bool> = recs.iter().map(|r| (r.id.clone(), rng.random_bool(0.3))).collect();
        let out = filter_graph(&g.split_components(), &Labels(labels.clone())).unwrap();
        for h in &out.graphs {
            prop_assert!(h.node_ids().all(|id| !labels[id]));
        }
        prop_assert_eq!(out.verdicts.len(), g.len());
    }
}

#[test]
fn permuted_labels_learn_nothing() {
    // Balanced corpus where the label is carried by one token; shuffling the
    // labels destroys the signal.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let words = ["rain", "river", "storm", "wind", "dam", "levee", "gaug", "alert"];
    let mut docs: Vec<LabeledDoc> = (0..2000)
        .map(|i| {
            let fake = i % 2 == 0;
            let mut toks: Vec<&str> = (0..6).map(|_| words[rng.random_range(0..words.len())]).collect();
            toks.push(if fake { "hoax" } else { "report" });
            LabeledDoc {
                doc: doc(i, &toks),
                fake,
            }
        })
        .collect();
    let real = train_linear(&docs, &TrainConfig::default()).unwrap();
    assert!(real.test_accuracy.unwrap() > 0.99);

    let mut labels: Vec<bool> = docs.iter().map(|d| d.fake).collect();
    labels.shuffle(&mut rng);
    for (d, l) in docs.iter_mut().zip(labels) {
        d.fake = l;
    }
    let permuted = train_linear(&docs, &TrainConfig::default()).unwrap();
    let n = permuted.test_size as f64;
    let bound = 0.5 + 3.0 * (0.25 / n).sqrt();
    assert!(permuted.test_accuracy.unwrap() <= bound, "{:?} > {bound}", permuted.test_accuracy);
}
