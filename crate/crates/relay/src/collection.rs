use std::collections::{BTreeSet, HashSet};
use std::sync::Mutex;

use contcomm_core::GeoPoint;

/// Append-only `(tweet_id, location)` list for one topic. Appending an id
/// already present does nothing, which turns redelivery into an
/// exactly-once effect.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicCollection {
    entries: Vec<(String, GeoPoint)>,
    ids: HashSet<String>,
}

impl TopicCollection {
    pub fn append(&mut self, tweet_id: &str, geo: GeoPoint) -> bool {
        if !self.ids.insert(tweet_id.to_string()) {
            return false;
        }
        self.entries.push((tweet_id.to_string(), geo));
        true
    }

    pub fn entries(&self) -> &[(String, GeoPoint)] {
        &self.entries
    }

    pub fn contains(&self, tweet_id: &str) -> bool {
        self.ids.contains(tweet_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One [`TopicCollection`] per topic, each behind its own lock.
#[derive(Debug)]
pub struct TopicCollections {
    topics: Vec<Mutex<TopicCollection>>,
}

impl TopicCollections {
    pub fn new(k: usize) -> Self {
        Self {
            topics: (0..k).map(|_| Mutex::new(TopicCollection::default())).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.topics.len()
    }

    /// `None` for an out-of-range topic, else whether the id was new.
    pub fn append(&self, topic: usize, tweet_id: &str, geo: GeoPoint) -> Option<bool> {
        let slot = self.topics.get(topic)?;
        Some(slot.lock().unwrap_or_else(|e| e.into_inner()).append(tweet_id, geo))
    }

    pub fn snapshot(&self, topic: usize) -> Option<TopicCollection> {
        self.topics
            .get(topic)
            .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }

    pub fn len(&self, topic: usize) -> usize {
        self.topics
            .get(topic)
            .map_or(0, |m| m.lock().unwrap_or_else(|e| e.into_inner()).len())
    }

    pub fn total(&self) -> usize {
        (0..self.k()).map(|t| self.len(t)).sum()
    }

    /// Every stored `(topic, tweet_id)` pair.
    pub fn pairs(&self) -> BTreeSet<(usize, String)> {
        let mut out = BTreeSet::new();
        for (t, m) in self.topics.iter().enumerate() {
            for (id, _) in m.lock().unwrap_or_else(|e| e.into_inner()).entries() {
                out.insert((t, id.clone()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_append_is_absorbed() {
        let c = TopicCollections::new(2);
        assert_eq!(c.append(1, "a", GeoPoint::unresolved()), Some(true));
        assert_eq!(c.append(1, "a", GeoPoint::device(1.0, 1.0)), Some(false));
        assert_eq!(c.append(0, "a", GeoPoint::unresolved()), Some(true));
        assert_eq!(c.append(2, "a", GeoPoint::unresolved()), None);
        assert_eq!(c.len(1), 1);
        assert_eq!(c.snapshot(1).unwrap().entries()[0].1, GeoPoint::unresolved());
        assert_eq!(c.total(), 2);
    }
}
