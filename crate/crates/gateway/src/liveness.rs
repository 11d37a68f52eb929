//! Source supervision: a checker runs every interval and reopens a source
//! that has produced nothing for a whole interval or lost its connection.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use contcomm_core::corpus::{CorpusError, PostSource, SourceEvent, StreamSource};
use contcomm_core::Clock;
use serde::Serialize;

/// Opens (or reopens) the underlying source.
pub trait SourceFactory: Send + Sync {
    fn open(&self) -> Result<Box<dyn PostSource>, CorpusError>;

    fn describe(&self) -> String;
}

impl SourceFactory for StreamSource {
    fn open(&self) -> Result<Box<dyn PostSource>, CorpusError> {
        StreamSource::open(self)
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

impl<F> SourceFactory for F
where
    F: Fn() -> Box<dyn PostSource> + Send + Sync,
{
    fn open(&self) -> Result<Box<dyn PostSource>, CorpusError> {
        Ok(self())
    }

    fn describe(&self) -> String {
        "closure".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthReport {
    pub source: String,
    pub checks: u64,
    pub restarts: u64,
    pub failed_reopens: u64,
    pub healthy: bool,
    /// The source reached its natural end (a finite replay).
    pub finished: bool,
    pub records: u64,
    pub last_record_at: Option<DateTime<Utc>>,
    pub last_check_at: Option<DateTime<Utc>>,
}

struct State {
    source: Option<Box<dyn PostSource>>,
    last_progress: DateTime<Utc>,
    disconnected: bool,
    report: HealthReport,
}

/// A source plus the bookkeeping the liveness checker needs.
pub struct Supervisor {
    factory: Box<dyn SourceFactory>,
    clock: Arc<dyn Clock>,
    interval: Duration,
    state: Mutex<State>,
}

impl Supervisor {
    pub fn new(factory: Box<dyn SourceFactory>, clock: Arc<dyn Clock>, interval: Duration) -> Self {
        let now = clock.now();
        let (source, failed) = match factory.open() {
            Ok(s) => (Some(s), 0),
            Err(e) => {
                tracing::warn!(error = %e, "source failed to open");
                (None, 1)
            }
        };
        let report = HealthReport {
            source: factory.describe(),
            checks: 0,
            restarts: 0,
            failed_reopens: failed,
            healthy: source.is_some(),
            finished: false,
            records: 0,
            last_record_at: None,
            last_check_at: None,
        };
        Self {
            factory,
            clock,
            interval,
            state: Mutex::new(State {
                source,
                last_progress: now,
                disconnected: false,
                report,
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Next event from the current source. A missing source reads as idle.
    pub fn poll(&self) -> SourceEvent {
        let mut st = self.lock();
        if st.report.finished {
            return SourceEvent::Exhausted;
        }
        let Some(src) = st.source.as_mut() else {
            return SourceEvent::Idle;
        };
        let ev = src.poll_next();
        match &ev {
            SourceEvent::Record(_) => {
                let now = self.clock.now();
                st.last_progress = now;
                st.report.records += 1;
                st.report.last_record_at = Some(now);
            }
            SourceEvent::Exhausted => st.report.finished = true,
            SourceEvent::Disconnected => st.disconnected = true,
            SourceEvent::Malformed(_) | SourceEvent::Idle => {}
        }
        ev
    }

    /// One liveness check at `now`. A source counts as stalled when it
    /// disconnected or has produced no record for at least one interval;
    /// a stalled source is reopened.
    pub fn check(&self, now: DateTime<Utc>) -> HealthReport {
        let mut st = self.lock();
        st.report.checks += 1;
        st.report.last_check_at = Some(now);
        let stalled =
            !st.report.finished && (st.disconnected || st.source.is_none() || now - st.last_progress >= self.interval);
        if stalled {
            match self.factory.open() {
                Ok(s) => {
                    st.source = Some(s);
                    st.report.restarts += 1;
                    tracing::warn!(restarts = st.report.restarts, "reopened stalled source");
                }
                Err(e) => {
                    st.source = None;
                    st.report.failed_reopens += 1;
                    tracing::error!(error = %e, "could not reopen source");
                }
            }
            st.disconnected = false;
            st.last_progress = now;
        }
        st.report.healthy = st.source.is_some();
        st.report.clone()
    }

    pub fn report(&self) -> HealthReport {
        self.lock().report.clone()
    }
}

/// Runs `check` every `period` of real time until `stop` is set.
pub fn spawn_checker(
    sup: Arc<Supervisor>,
    period: std::time::Duration,
    stop: Arc<std::sync::atomic::AtomicBool>,
    on_check: impl Fn(&HealthReport) + Send + 'static,
) -> std::thread::JoinHandle<()> {
    std::thread::spawn(move || {
        let start = std::time::Instant::now();
        let mut n = 1u32;
        while !stop.load(std::sync::atomic::Ordering::SeqCst) {
            // Sleep to the next multiple of the period so checks do not
            // drift by the time each one takes.
            let due = start + period * n;
            let now = std::time::Instant::now();
            if due > now {
                std::thread::sleep((due - now).min(std::time::Duration::from_millis(50)));
                continue;
            }
            n += 1;
            let report = sup.check(sup.clock.now());
            on_check(&report);
        }
    })
}
