//! The collector loop: pulls posts from a supervised source, keeps those
//! matching the dictionary and hands them to the gateway in micro-batches.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use contcomm_core::corpus::{SourceEvent, StreamFilter};
use contcomm_core::TweetRecord;

use crate::api::Gateway;
use crate::liveness::Supervisor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchPolicy {
    /// Flush at least this often; zero flushes after every record.
    pub interval: Duration,
    pub max: usize,
    /// Records per second taken from the source; unpaced when `None`.
    pub rate: Option<f64>,
    /// Sleep between polls of an idle source.
    pub idle: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub records: u64,
    pub filtered_out: u64,
    pub malformed: u64,
    pub batches: u64,
    pub quarantined: u64,
}

/// Runs until `stop` is set or the source is exhausted. Batch errors that
/// survive the retry are quarantined by the gateway; anything else is
/// logged and the loop carries on.
pub fn run(gw: &Gateway, sup: &Supervisor, mut filter: StreamFilter, policy: BatchPolicy, stop: &AtomicBool) -> IngestSummary {
    let mut sum = IngestSummary::default();
    let mut batch: Vec<TweetRecord> = Vec::new();
    let mut opened = Instant::now();
    let pace = policy.rate.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r));
    let mut next_due = Instant::now();

    let flush = |batch: &mut Vec<TweetRecord>, sum: &mut IngestSummary| {
        if batch.is_empty() {
            return;
        }
        match gw.ingest(batch) {
            Ok(Some(_)) => sum.batches += 1,
            Ok(None) => sum.quarantined += 1,
            Err(e) => tracing::error!(error = %e, "batch could not be processed or quarantined"),
        }
        batch.clear();
    };

    while !stop.load(Ordering::SeqCst) {
        if pace.is_some() {
            let now = Instant::now();
            if next_due > now {
                std::thread::sleep(next_due - now);
            }
        }
        match sup.poll() {
            SourceEvent::Record(r) => {
                if let Some(p) = pace {
                    next_due = next_due.max(Instant::now() - p) + p;
                }
                if filter.accept(&r) {
                    sum.records += 1;
                    if batch.is_empty() {
                        opened = Instant::now();
                    }
                    batch.push(r);
                } else {
                    sum.filtered_out += 1;
                }
            }
            SourceEvent::Malformed(reason) => {
                sum.malformed += 1;
                tracing::warn!(%reason, "skipping malformed record");
            }
            SourceEvent::Idle | SourceEvent::Disconnected => std::thread::sleep(policy.idle),
            SourceEvent::Exhausted => break,
        }
        if batch.len() >= policy.max.max(1) || (!batch.is_empty() && opened.elapsed() >= policy.interval) {
            flush(&mut batch, &mut sum);
        }
    }
    flush(&mut batch, &mut sum);
    sum
}
