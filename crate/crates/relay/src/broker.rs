//! One partition per topic, consumer groups with independent progress,
//! at-least-once delivery with acknowledgment timeouts.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use chrono::{DateTime, Duration, Utc};
use contcomm_core::Clock;
use thiserror::Error;

use crate::envelope::Envelope;
use crate::log::{Durability, PartitionLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrokerError {
    #[error("broker stopped")]
    BrokerStopped,
    #[error("queue for topic {topic} is full ({capacity} unacknowledged)")]
    QueueFull { topic: usize, capacity: usize },
    #[error("topic {topic} is not below the topic count {k}")]
    InvalidTopic { topic: usize, k: usize },
    #[error("unknown topic {0}")]
    UnknownTopic(usize),
    #[error("group {group:?} is not subscribed to topic {topic}")]
    UnknownGroup { topic: usize, group: String },
    #[error("rebalance in progress, retry")]
    RebalanceInProgress,
    #[error("log i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    /// Number of topics; valid topic indices are `0..k`.
    pub k: usize,
    /// Most envelopes a partition holds that some group has not yet
    /// acknowledged. Publishing beyond this fails with `QueueFull`.
    pub capacity: usize,
    pub ack_timeout: Duration,
    pub rebalance_window: Duration,
    pub durability: Durability,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            k: 6,
            capacity: 100_000,
            ack_timeout: Duration::seconds(30),
            rebalance_window: Duration::milliseconds(500),
            durability: Durability::Memory,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub offset: u64,
    pub envelope: Envelope,
}

#[derive(Debug, Default)]
struct Group {
    /// Next never-delivered offset.
    next: u64,
    /// Offsets below this are all acknowledged.
    watermark: u64,
    acked: BTreeSet<u64>,
    /// Delivered but unacknowledged: offset → (redelivery deadline, attempts).
    inflight: BTreeMap<u64, (DateTime<Utc>, u32)>,
    rebalance_until: Option<DateTime<Utc>>,
}

impl Group {
    fn ack(&mut self, offset: u64) -> bool {
        if offset < self.watermark || self.acked.contains(&offset) || self.inflight.remove(&offset).is_none() {
            return false;
        }
        self.acked.insert(offset);
        while self.acked.remove(&self.watermark) {
            self.watermark += 1;
        }
        true
    }
}

#[derive(Debug)]
struct PartState {
    log: PartitionLog,
    groups: BTreeMap<String, Group>,
}

impl PartState {
    fn backlog(&self) -> u64 {
        let low = self.groups.values().map(|g| g.watermark).min().unwrap_or(0);
        self.log.len() - low
    }
}

#[derive(Debug)]
struct Partition {
    state: Mutex<PartState>,
    cv: Condvar,
}

pub struct Broker {
    cfg: BrokerConfig,
    clock: Arc<dyn Clock>,
    parts: Vec<Partition>,
    stopped: AtomicBool,
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broker").field("k", &self.cfg.k).finish_non_exhaustive()
    }
}

impl Broker {
    /// Opens a broker, replaying partition logs when durability is on disk.
    /// Consumer group progress is not persisted: after a restart groups
    /// resubscribe and read every retained envelope again.
    pub fn open(cfg: BrokerConfig, clock: Arc<dyn Clock>) -> Result<Self, BrokerError> {
        let mut parts = Vec::with_capacity(cfg.k);
        for t in 0..cfg.k {
            let log = match &cfg.durability {
                Durability::Memory => PartitionLog::memory(),
                Durability::Disk { dir, fsync } => {
                    PartitionLog::open(dir, t, *fsync).map_err(|e| BrokerError::Io(e.to_string()))?
                }
            };
            parts.push(Partition {
                state: Mutex::new(PartState {
                    log,
                    groups: BTreeMap::new(),
                }),
                cv: Condvar::new(),
            });
        }
        Ok(Self {
            cfg,
            clock,
            parts,
            stopped: AtomicBool::new(false),
        })
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.cfg
    }

    fn part(&self, topic: usize) -> Result<&Partition, BrokerError> {
        if self.stopped.load(Ordering::SeqCst) {
            return Err(BrokerError::BrokerStopped);
        }
        self.parts.get(topic).ok_or(BrokerError::UnknownTopic(topic))
    }

    fn lock(p: &Partition) -> MutexGuard<'_, PartState> {
        p.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends to the topic's partition; returns the offset once the record
    /// is in the log.
    pub fn publish(&self, env: Envelope) -> Result<u64, BrokerError> {
        if self.stopped.load(Ordering::SeqCst) {
            return Err(BrokerError::BrokerStopped);
        }
        if env.topic >= self.cfg.k {
            return Err(BrokerError::InvalidTopic {
                topic: env.topic,
                k: self.cfg.k,
            });
        }
        let p = &self.parts[env.topic];
        let mut st = Self::lock(p);
        if st.backlog() >= self.cfg.capacity as u64 {
            return Err(BrokerError::QueueFull {
                topic: env.topic,
                capacity: self.cfg.capacity,
            });
        }
        let stored = Envelope { attempt: 0, ..env };
        let off = st.log.append(&stored).map_err(|e| BrokerError::Io(e.to_string()))?;
        drop(st);
        p.cv.notify_all();
        Ok(off)
    }

    /// Registers `group` on `topic`, starting at the oldest retained
    /// envelope. Subscribing an existing group is a no-op.
    pub fn subscribe(&self, topic: usize, group: &str) -> Result<(), BrokerError> {
        let p = self.part(topic)?;
        Self::lock(p).groups.entry(group.to_string()).or_default();
        Ok(())
    }

    pub fn groups(&self, topic: usize) -> Result<Vec<String>, BrokerError> {
        Ok(Self::lock(self.part(topic)?).groups.keys().cloned().collect())
    }

    /// Up to `max` deliveries: expired unacknowledged envelopes first (in
    /// offset order), then new ones.
    pub fn poll(&self, topic: usize, group: &str, max: usize) -> Result<Vec<Delivery>, BrokerError> {
        let p = self.part(topic)?;
        let now = self.clock.now();
        let mut st = Self::lock(p);
        let PartState { log, groups } = &mut *st;
        let g = groups.get_mut(group).ok_or_else(|| BrokerError::UnknownGroup {
            topic,
            group: group.to_string(),
        })?;
        if let Some(until) = g.rebalance_until {
            if now < until {
                return Err(BrokerError::RebalanceInProgress);
            }
            g.rebalance_until = None;
        }
        let deadline = now + self.cfg.ack_timeout;
        let mut out = Vec::new();
        let expired: Vec<u64> = g
            .inflight
            .iter()
            .filter(|(_, (d, _))| *d <= now)
            .map(|(o, _)| *o)
            .take(max)
            .collect();
        for off in expired {
            let slot = g.inflight.get_mut(&off).expect("present");
            slot.0 = deadline;
            slot.1 += 1;
            out.push(delivery(log, off, slot.1));
        }
        while out.len() < max && g.next < log.len() {
            let off = g.next;
            g.next += 1;
            g.inflight.insert(off, (deadline, 1));
            out.push(delivery(log, off, 1));
        }
        Ok(out)
    }

    /// Acknowledges one delivery. Returns false for duplicates and offsets
    /// that were never delivered.
    pub fn ack(&self, topic: usize, group: &str, offset: u64) -> Result<bool, BrokerError> {
        let p = self.part(topic)?;
        let mut st = Self::lock(p);
        let g = st.groups.get_mut(group).ok_or_else(|| BrokerError::UnknownGroup {
            topic,
            group: group.to_string(),
        })?;
        Ok(g.ack(offset))
    }

    /// Blocks until a delivery is available or `timeout` of real time has
    /// passed. Redelivery deadlines follow the broker clock, so the wait is
    /// sliced to notice a simulated clock moving.
    pub fn recv(&self, topic: usize, group: &str, timeout: std::time::Duration) -> Result<Option<Delivery>, BrokerError> {
        let started = std::time::Instant::now();
        loop {
            if let Some(d) = self.poll(topic, group, 1)?.pop() {
                return Ok(Some(d));
            }
            let left = timeout.saturating_sub(started.elapsed());
            if left.is_zero() {
                return Ok(None);
            }
            let p = self.part(topic)?;
            let st = Self::lock(p);
            let slice = left.min(std::time::Duration::from_millis(10));
            let _unused = p.cv.wait_timeout(st, slice).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Starts a rebalance of `group` on `topic`: its unacknowledged envelopes
    /// become due immediately and polls fail with `RebalanceInProgress`
    /// until the rebalance window has passed.
    pub fn rebalance(&self, topic: usize, group: &str) -> Result<(), BrokerError> {
        let p = self.part(topic)?;
        let now = self.clock.now();
        let mut st = Self::lock(p);
        let g = st.groups.get_mut(group).ok_or_else(|| BrokerError::UnknownGroup {
            topic,
            group: group.to_string(),
        })?;
        for slot in g.inflight.values_mut() {
            slot.0 = now;
        }
        g.rebalance_until = Some(now + self.cfg.rebalance_window);
        Ok(())
    }

    /// Envelopes published to `topic` and not yet acknowledged by every group.
    pub fn backlog(&self, topic: usize) -> Result<u64, BrokerError> {
        Ok(Self::lock(self.part(topic)?).backlog())
    }

    /// True when every group has acknowledged everything published.
    pub fn quiescent(&self) -> bool {
        self.parts.iter().all(|p| {
            let st = Self::lock(p);
            st.groups.values().all(|g| g.watermark == st.log.len())
        })
    }

    pub fn published(&self, topic: usize) -> Result<Vec<Envelope>, BrokerError> {
        Ok(Self::lock(self.part(topic)?).log.entries().to_vec())
    }

    pub fn stop(&self) {
        self.stopped.store(true, Ordering::SeqCst);
        for p in &self.parts {
            p.cv.notify_all();
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped.load(Ordering::SeqCst)
    }

    pub fn consumer(self: &Arc<Self>, topic: usize, group: &str) -> Result<Consumer, BrokerError> {
        self.subscribe(topic, group)?;
        Ok(Consumer {
            broker: Arc::clone(self),
            topic,
            group: group.to_string(),
        })
    }
}

fn delivery(log: &PartitionLog, offset: u64, attempt: u32) -> Delivery {
    let mut envelope = log.get(offset).expect("offset in log").clone();
    envelope.attempt = attempt;
    Delivery { offset, envelope }
}

/// A group member bound to one topic.
#[derive(Debug, Clone)]
pub struct Consumer {
    broker: Arc<Broker>,
    topic: usize,
    group: String,
}

impl Consumer {
    pub fn topic(&self) -> usize {
        self.topic
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn recv(&self, timeout: std::time::Duration) -> Result<Option<Delivery>, BrokerError> {
        self.broker.recv(self.topic, &self.group, timeout)
    }

    pub fn poll(&self, max: usize) -> Result<Vec<Delivery>, BrokerError> {
        self.broker.poll(self.topic, &self.group, max)
    }

    pub fn ack(&self, d: &Delivery) -> Result<bool, BrokerError> {
        self.broker.ack(self.topic, &self.group, d.offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use contcomm_core::{GeoPoint, ManualClock};

    fn setup(k: usize, capacity: usize) -> (Arc<ManualClock>, Arc<Broker>) {
        let clock = Arc::new(ManualClock::new(DateTime::UNIX_EPOCH));
        let cfg = BrokerConfig {
            k,
            capacity,
            ack_timeout: Duration::seconds(5),
            ..Default::default()
        };
        let b = Broker::open(cfg, clock.clone()).unwrap();
        (clock, Arc::new(b))
    }

    fn env(i: usize, topic: usize) -> Envelope {
        Envelope::new(format!("t{i}"), topic, GeoPoint::unresolved(), DateTime::UNIX_EPOCH)
    }

    #[test]
    fn publish_then_consume() {
        let (_, b) = setup(2, 10);
        let c = b.consumer(1, "g").unwrap();
        b.publish(env(7, 1)).unwrap();
        let d = c.poll(10).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].envelope.tweet_id, "t7");
        assert_eq!(d[0].envelope.attempt, 1);
        assert!(c.ack(&d[0]).unwrap());
        assert!(!c.ack(&d[0]).unwrap());
        assert!(b.quiescent());
    }

    #[test]
    fn invalid_topic_and_stop() {
        let (_, b) = setup(2, 10);
        assert_eq!(b.publish(env(0, 2)), Err(BrokerError::InvalidTopic { topic: 2, k: 2 }));
        assert_eq!(b.poll(5, "g", 1), Err(BrokerError::UnknownTopic(5)));
        b.stop();
        assert_eq!(b.publish(env(0, 0)), Err(BrokerError::BrokerStopped));
    }

    #[test]
    fn unacked_is_redelivered_after_timeout() {
        let (clock, b) = setup(1, 10);
        b.subscribe(0, "g").unwrap();
        b.publish(env(0, 0)).unwrap();
        assert_eq!(b.poll(0, "g", 5).unwrap().len(), 1);
        assert!(b.poll(0, "g", 5).unwrap().is_empty());
        clock.advance(Duration::seconds(5));
        let again = b.poll(0, "g", 5).unwrap();
        assert_eq!(again[0].envelope.attempt, 2);
    }

    #[test]
    fn backpressure_and_release() {
        let (_, b) = setup(1, 3);
        b.subscribe(0, "g").unwrap();
        for i in 0..3 {
            b.publish(env(i, 0)).unwrap();
        }
        assert_eq!(b.publish(env(3, 0)), Err(BrokerError::QueueFull { topic: 0, capacity: 3 }));
        let d = b.poll(0, "g", 1).unwrap();
        b.ack(0, "g", d[0].offset).unwrap();
        b.publish(env(3, 0)).unwrap();
    }

    #[test]
    fn rebalance_blocks_then_redelivers() {
        let (clock, b) = setup(1, 10);
        b.subscribe(0, "g").unwrap();
        b.publish(env(0, 0)).unwrap();
        b.poll(0, "g", 1).unwrap();
        b.rebalance(0, "g").unwrap();
        assert_eq!(b.poll(0, "g", 1), Err(BrokerError::RebalanceInProgress));
        clock.advance(Duration::seconds(1));
        assert_eq!(b.poll(0, "g", 1).unwrap()[0].envelope.attempt, 2);
    }
}
