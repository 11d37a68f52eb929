use chrono::{DateTime, Utc};
use contcomm_core::GeoPoint;
use serde::{Deserialize, Serialize};

/// A `<tweet, topic>` pair in flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub tweet_id: String,
    pub topic: usize,
    pub geo: GeoPoint,
    pub enqueued_at: DateTime<Utc>,
    /// 0 while stored; the broker sets it to the delivery count on each
    /// delivery.
    #[serde(default)]
    pub attempt: u32,
}

impl Envelope {
    pub fn new(tweet_id: impl Into<String>, topic: usize, geo: GeoPoint, enqueued_at: DateTime<Utc>) -> Self {
        Self {
            tweet_id: tweet_id.into(),
            topic,
            geo,
            enqueued_at,
            attempt: 0,
        }
    }
}
