use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use contcomm_core::{Coord, GeoPoint};
use serde::{Deserialize, Serialize};

use crate::pins::{Pin, PinChange};
use crate::GatewayError;

/// Rectangle given by its south-west and north-east corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub sw: Coord,
    pub ne: Coord,
}

impl BBox {
    pub fn new(sw: Coord, ne: Coord) -> Result<Self, GatewayError> {
        let b = Self { sw, ne };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !self.sw.is_valid() || !self.ne.is_valid() || self.sw.lat > self.ne.lat || self.sw.lon > self.ne.lon {
            return Err(GatewayError::BadRequest(
                "bbox corners must be valid and ordered south-west, north-east".into(),
            ));
        }
        Ok(())
    }

    /// Parses `south,west,north,east`.
    pub fn parse(s: &str) -> Result<Self, GatewayError> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| GatewayError::BadRequest(format!("bbox {s:?} is not four numbers")))?;
        let [s_, w, n, e] = v[..] else {
            return Err(GatewayError::BadRequest(format!("bbox {s:?} is not four numbers")));
        };
        Self::new(Coord::new(s_, w), Coord::new(n, e))
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.coord().is_some_and(|c| {
            (self.sw.lat..=self.ne.lat).contains(&c.lat) && (self.sw.lon..=self.ne.lon).contains(&c.lon)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub user_id: String,
    pub topics: BTreeSet<usize>,
    pub bbox: Option<BBox>,
    /// Also receive pins of other topics, flagged `subscribed: false`.
    #[serde(default)]
    pub others: bool,
    pub created_at: DateTime<Utc>,
}

/// A pin change as one user receives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    #[serde(flatten)]
    pub pin: Pin,
    pub subscribed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PinUpsert,
    PinRemoved,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PinUpsert => "pin_upsert",
            EventKind::PinRemoved => "pin_removed",
        }
    }
}

impl Subscription {
    /// What `self` receives for `change`, if anything. Subscribed topics
    /// come through flagged `subscribed: true`; other topics only when
    /// `others` is set, flagged false. Upserts must fall inside the bbox;
    /// removals pass regardless so a client never keeps a stale marker.
    pub fn view(&self, change: &PinChange) -> Option<PinEvent> {
        let pin = change.pin();
        let subscribed = self.topics.contains(&pin.topic);
        if !subscribed && !self.others {
            return None;
        }
        let kind = match change {
            PinChange::PinUpsert(_) => {
                if self.bbox.is_some_and(|b| !b.contains(&pin.centroid)) {
                    return None;
                }
                EventKind::PinUpsert
            }
            PinChange::PinRemoved(_) => EventKind::PinRemoved,
        };
        Some(PinEvent {
            kind,
            pin: pin.clone(),
            subscribed,
        })
    }
}

#[derive(Debug, Default)]
pub struct SubscriptionRegistry {
    subs: Mutex<BTreeMap<String, Subscription>>,
}

impl SubscriptionRegistry {
    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, Subscription>> {
        self.subs.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Adds `topics` to the user's subscription, creating it when new. A
    /// given bbox replaces the previous one.
    pub fn subscribe(
        &self,
        user_id: &str,
        topics: &[usize],
        bbox: Option<BBox>,
        others: Option<bool>,
        k: usize,
        now: DateTime<Utc>,
    ) -> Result<Subscription, GatewayError> {
        if user_id.is_empty() {
            return Err(GatewayError::BadRequest("user_id is empty".into()));
        }
        if topics.is_empty() {
            return Err(GatewayError::BadRequest("at least one topic is required".into()));
        }
        if let Some(&t) = topics.iter().find(|&&t| t >= k) {
            return Err(GatewayError::UnknownTopic(t));
        }
        if let Some(b) = &bbox {
            b.validate()?;
        }
        let mut subs = self.lock();
        let s = subs.entry(user_id.to_string()).or_insert_with(|| Subscription {
            user_id: user_id.to_string(),
            topics: BTreeSet::new(),
            bbox: None,
            others: false,
            created_at: now,
        });
        s.topics.extend(topics.iter().copied());
        if bbox.is_some() {
            s.bbox = bbox;
        }
        if let Some(o) = others {
            s.others = o;
        }
        Ok(s.clone())
    }

    /// Drops one topic. The subscription disappears with its last topic;
    /// the return value is what remains.
    pub fn unsubscribe(&self, user_id: &str, topic: usize, k: usize) -> Result<Option<Subscription>, GatewayError> {
        if topic >= k {
            return Err(GatewayError::UnknownTopic(topic));
        }
        let mut subs = self.lock();
        let s = subs
            .get_mut(user_id)
            .ok_or_else(|| GatewayError::UnknownUser(user_id.to_string()))?;
        if !s.topics.remove(&topic) {
            return Err(GatewayError::UnknownTopic(topic));
        }
        if s.topics.is_empty() {
            subs.remove(user_id);
            return Ok(None);
        }
        Ok(Some(s.clone()))
    }

    pub fn get(&self, user_id: &str) -> Option<Subscription> {
        self.lock().get(user_id).cloned()
    }

    pub fn all(&self) -> Vec<Subscription> {
        self.lock().values().cloned().collect()
    }
}
