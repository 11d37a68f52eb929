//! Write-versus-read scalability runs. A cell spawns `writers` insert
//! operations (tweet document plus topic collection append) and `readers`
//! count-by-topic queries against a cold store, all at once, and times
//! the batch to completion.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Barrier, Mutex};
use std::time::Instant;

use contcomm_core::GeoPoint;
use contcomm_relay::{ShardRouter, ShardedStore, StoreError, TopicCollections};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{writers} writes acknowledged but {stored} tweets and {collected} topic entries stored")]
    LostWrites { writers: usize, stored: usize, collected: usize },
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub router: ShardRouter,
    pub k: usize,
    /// Worker threads shared by writers and readers; defaults to the
    /// machine's parallelism.
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            router: ShardRouter::default(),
            k: 6,
            threads: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub writers: usize,
    pub readers: usize,
    pub runs: usize,
    pub mean_s: f64,
    pub stdev_s: f64,
    pub samples: Vec<f64>,
    /// Every run ended with all acknowledged writes present.
    pub durable: bool,
}

impl BenchReport {
    pub fn from_samples(writers: usize, readers: usize, samples: Vec<f64>, durable: bool) -> Self {
        let (mean_s, stdev_s) = mean_stdev(&samples);
        Self {
            writers,
            readers,
            runs: samples.len(),
            mean_s,
            stdev_s,
            samples,
            durable,
        }
    }
}

/// Sample mean and standard deviation (n − 1); a single sample has stdev 0.
pub fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

enum Op {
    Write { id: String, topic: usize, geo: GeoPoint },
    Read { topic: usize },
}

/// Writers and readers interleaved evenly so both kinds are in flight for
/// the whole run.
fn workload(cfg: &BenchConfig, writers: usize, readers: usize) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = writers + readers;
    let mut ops = Vec::with_capacity(total);
    let (mut w, mut r) = (0, 0);
    for i in 0..total {
        // Bresenham split: after i+1 ops, about (i+1)·writers/total writes.
        let want_w = ((i + 1) * writers).div_ceil(total.max(1));
        if w < want_w && w < writers {
            let lat = rng.random_range(-1.0f64..1.0).asin().to_degrees();
            ops.push(Op::Write {
                id: format!("bench-{w}"),
                topic: rng.random_range(0..cfg.k),
                geo: GeoPoint::device(lat, rng.random_range(-180.0..180.0)),
            });
            w += 1;
        } else {
            ops.push(Op::Read {
                topic: rng.random_range(0..cfg.k),
            });
            r += 1;
        }
    }
    debug_assert_eq!((w, r), (writers, readers));
    ops
}

fn run_ops(
    ops: &[Op],
    cursor: &AtomicUsize,
    store: &ShardedStore,
    topics: &TopicCollections,
    failure: &Mutex<Option<StoreError>>,
) {
    loop {
        let i = cursor.fetch_add(1, Ordering::Relaxed);
        let Some(op) = ops.get(i) else { break };
        let res = match op {
            Op::Write { id, topic, geo } => store
                .put("tweets", id, *geo, serde_json::json!({"tweet_id": id, "topic": topic}))
                .map(|_| {
                    topics.append(*topic, id, *geo);
                }),
            Op::Read { topic } => {
                let want = serde_json::Value::from(*topic);
                store
                    .count_where("tweets", |d| d.doc.get("topic") == Some(&want))
                    .map(|_| ())
            }
        };
        if let Err(e) = res {
            failure.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
        }
    }
}

/// One timed run on a fresh store. Returns wall-clock seconds.
pub fn bench_with(cfg: &BenchConfig, writers: usize, readers: usize) -> Result<f64, BenchError> {
    let ops = workload(cfg, writers, readers);
    let store = ShardedStore::new(cfg.router);
    let topics = TopicCollections::new(cfg.k);
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(4, |n| n.get()))
        .clamp(1, ops.len().max(1));
    let cursor = AtomicUsize::new(0);
    let failure: Mutex<Option<StoreError>> = Mutex::new(None);

    // Workers are spawned up front and released together. The clock covers
    // the span from the first worker starting ops to the last one finishing,
    // so thread start-up and join are not timed.
    let ready = Barrier::new(threads + 1);
    let go = Barrier::new(threads + 1);
    let spans: Vec<(Instant, Instant)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    ready.wait();
                    go.wait();
                    let start = Instant::now();
                    run_ops(&ops, &cursor, &store, &topics, &failure);
                    (start, Instant::now())
                })
            })
            .collect();
        ready.wait();
        go.wait();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });
    let first = spans.iter().map(|s| s.0).min().expect("at least one worker");
    let last = spans.iter().map(|s| s.1).max().expect("at least one worker");
    let secs = (last - first).as_secs_f64();

    if let Some(e) = failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e.into());
    }
    let stored = store.count("tweets")?;
    let collected = topics.total();
    if stored != writers || collected != writers {
        return Err(BenchError::LostWrites {
            writers,
            stored,
            collected,
        });
    }
    Ok(secs)
}

pub fn bench(writers: usize, readers: usize) -> Result<f64, BenchError> {
    bench_with(&BenchConfig::default(), writers, readers)
}

/// `runs` cold-store repetitions of one cell, after one warm-up run. A run
/// that loses writes is recorded as non-durable rather than aborting the
/// cell.
pub fn run_cell(cfg: &BenchConfig, writers: usize, readers: usize, runs: usize) -> Result<BenchReport, BenchError> {
    let mut samples = Vec::with_capacity(runs);
    let mut durable = true;
    // Unrecorded warm-up so allocator and page-fault costs of the first
    // run do not land in the samples.
    if runs > 0 {
        bench_with(cfg, writers, readers)?;
    }
    for run in 0..runs {
        let cfg = BenchConfig {
            seed: cfg.seed.wrapping_add(run as u64),
            ..cfg.clone()
        };
        match bench_with(&cfg, writers, readers) {
            Ok(s) => samples.push(s),
            Err(BenchError::LostWrites { .. }) => durable = false,
            Err(e) => return Err(e),
        }
    }
    tracing::debug!(writers, readers, runs, "cell done");
    Ok(BenchReport::from_samples(writers, readers, samples, durable))
}

/// Cells run one after another, each on its own cold store.
pub fn run_grid(cfg: &BenchConfig, grid: &[(usize, usize)], runs: usize) -> Result<Vec<BenchReport>, BenchError> {
    grid.iter().map(|&(w, r)| run_cell(cfg, w, r, runs)).collect()
}

/// Every (writers, readers) pair over `sizes`, writers outer.
pub fn square_grid(sizes: &[usize]) -> Vec<(usize, usize)> {
    sizes.iter().flat_map(|&w| sizes.iter().map(move |&r| (w, r))).collect()
}

pub fn to_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("writers,readers,mean_s,stdev_s\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.writers, r.readers, r.mean_s, r.stdev_s);
    }
    out
}

pub fn write_csv(path: &Path, reports: &[BenchReport]) -> Result<(), BenchError> {
    std::fs::write(path, to_csv(reports))?;
    Ok(())
}

/// Writers down, readers across, `mean ± stdev` per cell.
pub fn table(reports: &[BenchReport]) -> String {
    let mut ws: Vec<usize> = reports.iter().map(|r| r.writers).collect();
    let mut rs: Vec<usize> = reports.iter().map(|r| r.readers).collect();
    ws.sort_unstable();
    ws.dedup();
    rs.sort_unstable();
    rs.dedup();
    let mut out = format!("{:>10} |", "writes");
    for r in &rs {
        let _ = write!(out, " {:>18} |", format!("{r} reads"));
    }
    out.push('\n');
    for w in &ws {
        let _ = write!(out, "{w:>10} |");
        for r in &rs {
            let cell = reports
                .iter()
                .find(|x| x.writers == *w && x.readers == *r)
                .map_or_else(|| "-".to_string(), |x| format!("{:.4} ± {:.4}", x.mean_s, x.stdev_s));
            let _ = write!(out, " {cell:>18} |");
        }
        out.push('\n');
    }
    out
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the rank vectors.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return f64::NAN;
    }
    cov / (va * vb).sqrt()
}

/// Pairs of cells with the same writer count where adding readers made the
/// mean faster by more than `tolerance` (relative).
pub fn reader_monotonicity_violations(reports: &[BenchReport], tolerance: f64) -> Vec<(BenchReport, BenchReport)> {
    let mut ws: Vec<usize> = reports.iter().map(|r| r.writers).collect();
    ws.sort_unstable();
    ws.dedup();
    let mut out = Vec::new();
    for w in ws {
        let mut row: Vec<&BenchReport> = reports.iter().filter(|r| r.writers == w).collect();
        row.sort_by_key(|r| r.readers);
        for pair in row.windows(2) {
            if pair[1].mean_s < pair[0].mean_s * (1.0 - tolerance) {
                out.push((pair[0].clone(), pair[1].clone()));
            }
        }
    }
    out
}
