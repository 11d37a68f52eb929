//! Map pins: one per live community, kept stable across recomputations
//! while the community keeps at least half of its members.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use contcomm_core::communities::CommunityGraph;
use contcomm_core::GeoPoint;
use serde::{Deserialize, Serialize};

/// Fraction of a pin's previous members a community must contain to keep
/// the pin's identity.
pub const PIN_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub pin_id: String,
    pub topic: usize,
    pub centroid: GeoPoint,
    pub member_count: usize,
    pub last_updated: DateTime<Utc>,
    pub area_id: String,
    pub radius_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "pin", rename_all = "snake_case")]
pub enum PinChange {
    PinUpsert(Pin),
    PinRemoved(Pin),
}

impl PinChange {
    pub fn pin(&self) -> &Pin {
        match self {
            PinChange::PinUpsert(p) | PinChange::PinRemoved(p) => p,
        }
    }

    pub fn is_removal(&self) -> bool {
        matches!(self, PinChange::PinRemoved(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    pin: Pin,
    members: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct PinRegistry {
    retention: Duration,
    pins: BTreeMap<String, Entry>,
    /// Expired communities that are still computed unchanged; they stay off
    /// the map until their membership changes.
    tombstones: BTreeSet<(usize, String)>,
}

fn overlap(old: &BTreeSet<String>, new: &BTreeSet<String>) -> f64 {
    if old.is_empty() {
        return 0.0;
    }
    old.intersection(new).count() as f64 / old.len() as f64
}

impl PinRegistry {
    pub fn new(retention: Duration) -> Self {
        Self {
            retention,
            pins: BTreeMap::new(),
            tombstones: BTreeSet::new(),
        }
    }

    pub fn retention(&self) -> Duration {
        self.retention
    }

    pub fn pins(&self) -> Vec<Pin> {
        self.pins.values().map(|e| e.pin.clone()).collect()
    }

    pub fn get(&self, pin_id: &str) -> Option<&Pin> {
        self.pins.get(pin_id).map(|e| &e.pin)
    }

    pub fn members(&self, pin_id: &str) -> Option<&BTreeSet<String>> {
        self.pins.get(pin_id).map(|e| &e.members)
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    /// Brings the pins in line with the current communities. A community
    /// takes over the existing pin of its topic with the largest overlap
    /// of at least [`PIN_OVERLAP`]; pairs are matched greedily from the
    /// largest overlap down. Pins left unmatched are removed. A pin whose
    /// community did not change is left untouched, so its `last_updated`
    /// only moves when something changed.
    pub fn reconcile(&mut self, communities: &[CommunityGraph], now: DateTime<Utc>) -> Vec<PinChange> {
        let live: BTreeSet<(usize, String)> = communities.iter().map(|c| (c.topic, c.area_id.clone())).collect();
        self.tombstones.retain(|t| live.contains(t));

        let mut wanted: Vec<(&CommunityGraph, BTreeSet<String>)> = communities
            .iter()
            .filter(|c| !self.tombstones.contains(&(c.topic, c.area_id.clone())))
            .filter(|c| c.centroid().is_some())
            .map(|c| (c, c.cluster.member_ids.iter().cloned().collect()))
            .collect();
        wanted.sort_by(|a, b| (a.0.topic, &a.0.area_id).cmp(&(b.0.topic, &b.0.area_id)));

        let mut pairs: Vec<(f64, String, usize)> = Vec::new();
        for (ci, (c, members)) in wanted.iter().enumerate() {
            for (id, e) in &self.pins {
                if e.pin.topic != c.topic {
                    continue;
                }
                let o = overlap(&e.members, members);
                if o >= PIN_OVERLAP {
                    pairs.push((o, id.clone(), ci));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut pin_taken = BTreeSet::new();
        let mut match_of: BTreeMap<usize, String> = BTreeMap::new();
        for (_, id, ci) in pairs {
            if pin_taken.contains(&id) || match_of.contains_key(&ci) {
                continue;
            }
            pin_taken.insert(id.clone());
            match_of.insert(ci, id);
        }

        let mut changes = Vec::new();
        let unmatched: Vec<String> = self.pins.keys().filter(|id| !pin_taken.contains(*id)).cloned().collect();
        for id in unmatched {
            let e = self.pins.remove(&id).expect("present");
            changes.push(PinChange::PinRemoved(e.pin));
        }
        for (ci, (c, members)) in wanted.into_iter().enumerate() {
            let centroid = c.centroid().expect("filtered above");
            let centroid = GeoPoint::device(centroid.lat, centroid.lon);
            match match_of.get(&ci) {
                Some(id) => {
                    let e = self.pins.get_mut(id).expect("matched pin exists");
                    if e.members != members {
                        e.members = members;
                        e.pin.centroid = centroid;
                        e.pin.member_count = e.members.len();
                        e.pin.area_id = c.area_id.clone();
                        e.pin.radius_km = c.radius_km();
                        e.pin.last_updated = now;
                        changes.push(PinChange::PinUpsert(e.pin.clone()));
                    }
                }
                None => {
                    let mut pin_id = format!("t{}-{}", c.topic, c.area_id);
                    // An unmatched pin with this id was removed above, so a
                    // clash means two communities share an area id.
                    while self.pins.contains_key(&pin_id) {
                        pin_id.push('+');
                    }
                    let pin = Pin {
                        pin_id: pin_id.clone(),
                        topic: c.topic,
                        centroid,
                        member_count: members.len(),
                        last_updated: now,
                        area_id: c.area_id.clone(),
                        radius_km: c.radius_km(),
                    };
                    changes.push(PinChange::PinUpsert(pin.clone()));
                    self.pins.insert(pin_id, Entry { pin, members });
                }
            }
        }
        changes
    }

    /// Removes pins untouched for longer than the retention window.
    pub fn expire(&mut self, now: DateTime<Utc>) -> Vec<Pin> {
        let doomed: Vec<String> = self
            .pins
            .iter()
            .filter(|(_, e)| now - e.pin.last_updated > self.retention)
            .map(|(id, _)| id.clone())
            .collect();
        doomed
            .into_iter()
            .map(|id| {
                let e = self.pins.remove(&id).expect("present");
                self.tombstones.insert((e.pin.topic, e.pin.area_id.clone()));
                e.pin
            })
            .collect()
    }

    /// Pins of `topic`.
    pub fn of_topic(&self, topic: usize) -> Vec<Pin> {
        self.pins.values().filter(|e| e.pin.topic == topic).map(|e| e.pin.clone()).collect()
    }
}
