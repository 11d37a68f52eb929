//! Randomized crash and redelivery schedule for exercising the delivery
//! contract end to end.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Duration};
use contcomm_core::{Clock, GeoPoint, ManualClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::broker::{Broker, BrokerConfig, BrokerError, Delivery};
use crate::collection::TopicCollections;
use crate::envelope::Envelope;

#[derive(Debug, Clone)]
pub struct FaultPlan {
    pub seed: u64,
    pub envelopes: usize,
    pub groups: usize,
    pub k: usize,
    /// Chance a delivery is lost by a consumer crash before it is appended.
    pub crash_before_append: f64,
    /// Chance a consumer crashes after appending but before acknowledging.
    pub crash_before_ack: f64,
    /// Chance per step that a group is rebalanced.
    pub rebalance: f64,
}

impl Default for FaultPlan {
    fn default() -> Self {
        Self {
            seed: 7,
            envelopes: 1000,
            groups: 3,
            k: 6,
            crash_before_append: 0.15,
            crash_before_ack: 0.15,
            rebalance: 0.02,
        }
    }
}

#[derive(Debug)]
pub struct FaultReport {
    pub published: BTreeSet<(usize, String)>,
    /// Final collection contents per group.
    pub collected: Vec<BTreeSet<(usize, String)>>,
    /// Per group, the number of times an append found the id already present.
    pub duplicates_absorbed: Vec<usize>,
    pub deliveries: usize,
    pub redeliveries: usize,
    pub max_attempt: u32,
    pub rebalances: usize,
    /// Deliveries whose envelope did not match the published record.
    pub phantoms: usize,
    pub quiescent: bool,
    pub steps: usize,
}

impl FaultReport {
    pub fn exact(&self) -> bool {
        self.quiescent && self.phantoms == 0 && self.collected.iter().all(|c| *c == self.published)
    }
}

/// Interleaves publishing with consumption by `groups` consumer groups
/// whose members crash at random, then drains until the broker is
/// quiescent. Time is simulated.
pub fn run(plan: &FaultPlan) -> Result<FaultReport, BrokerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let clock = Arc::new(ManualClock::new(DateTime::UNIX_EPOCH));
    let cfg = BrokerConfig {
        k: plan.k,
        capacity: plan.envelopes + 1,
        ack_timeout: Duration::seconds(30),
        rebalance_window: Duration::milliseconds(500),
        ..Default::default()
    };
    let broker = Broker::open(cfg, clock.clone())?;
    let group_names: Vec<String> = (0..plan.groups).map(|g| format!("g{g}")).collect();
    for t in 0..plan.k {
        for g in &group_names {
            broker.subscribe(t, g)?;
        }
    }
    let collections: Vec<TopicCollections> = (0..plan.groups).map(|_| TopicCollections::new(plan.k)).collect();
    let mut by_offset: BTreeMap<(usize, u64), Envelope> = BTreeMap::new();
    let mut published = BTreeSet::new();
    let mut report = FaultReport {
        published: BTreeSet::new(),
        collected: Vec::new(),
        duplicates_absorbed: vec![0; plan.groups],
        deliveries: 0,
        redeliveries: 0,
        max_attempt: 0,
        rebalances: 0,
        phantoms: 0,
        quiescent: false,
        steps: 0,
    };

    let mut next = 0usize;
    let step_cap = plan.envelopes * 200 + 10_000;
    while report.steps < step_cap {
        report.steps += 1;
        if next < plan.envelopes && rng.random_bool(0.5) {
            let burst = rng.random_range(1..=8).min(plan.envelopes - next);
            for _ in 0..burst {
                let topic = rng.random_range(0..plan.k);
                let geo = GeoPoint::device(rng.random_range(-60.0..60.0), rng.random_range(-180.0..180.0));
                let env = Envelope::new(format!("tw{next:05}"), topic, geo, clock.now());
                let off = broker.publish(env.clone())?;
                published.insert((topic, env.tweet_id.clone()));
                by_offset.insert((topic, off), env);
                next += 1;
            }
        }
        let g = rng.random_range(0..plan.groups);
        let topic = rng.random_range(0..plan.k);
        if rng.random_bool(plan.rebalance) {
            broker.rebalance(topic, &group_names[g])?;
            report.rebalances += 1;
        }
        let batch = match broker.poll(topic, &group_names[g], rng.random_range(1..=16)) {
            Ok(b) => b,
            Err(BrokerError::RebalanceInProgress) => {
                clock.advance(Duration::milliseconds(100));
                continue;
            }
            Err(e) => return Err(e),
        };
        for Delivery { offset, envelope } in batch {
            report.deliveries += 1;
            report.max_attempt = report.max_attempt.max(envelope.attempt);
            if envelope.attempt > 1 {
                report.redeliveries += 1;
            }
            let stored = by_offset.get(&(topic, offset));
            if stored.is_none_or(|s| s.tweet_id != envelope.tweet_id || s.topic != envelope.topic || envelope.attempt < 1) {
                report.phantoms += 1;
                continue;
            }
            if rng.random_bool(plan.crash_before_append) {
                continue;
            }
            if collections[g].append(topic, &envelope.tweet_id, envelope.geo) == Some(false) {
                report.duplicates_absorbed[g] += 1;
            }
            if rng.random_bool(plan.crash_before_ack) {
                continue;
            }
            broker.ack(topic, &group_names[g], offset)?;
        }
        clock.advance(Duration::seconds(rng.random_range(0..=3)));
        if next == plan.envelopes && broker.quiescent() {
            report.quiescent = true;
            break;
        }
    }
    report.published = published;
    report.collected = collections.iter().map(TopicCollections::pairs).collect();
    Ok(report)
}
