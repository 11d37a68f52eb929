use std::sync::atomic::{AtomicU64, Ordering};

use tokio::sync::broadcast;

use crate::pins::{Pin, PinChange};
use crate::subscriptions::{EventKind, PinEvent, Subscription};

#[derive(Debug, Clone, PartialEq)]
pub enum HubMessage {
    Change(PinChange),
    /// Tells one user's clients to drop these pins after an unsubscribe.
    Drop { user_id: String, pins: Vec<Pin> },
}

/// Fan-out of pin changes to push connections. Sending never blocks; a
/// connection that falls more than the buffer behind is cut off.
#[derive(Debug)]
pub struct EventHub {
    tx: broadcast::Sender<HubMessage>,
    sent: AtomicU64,
}

impl EventHub {
    pub fn new(buffer: usize) -> Self {
        let (tx, _) = broadcast::channel(buffer.max(1));
        Self {
            tx,
            sent: AtomicU64::new(0),
        }
    }

    pub fn publish(&self, changes: &[PinChange]) {
        for c in changes {
            self.send(HubMessage::Change(c.clone()));
        }
    }

    pub fn drop_for(&self, user_id: &str, pins: Vec<Pin>) {
        if !pins.is_empty() {
            self.send(HubMessage::Drop {
                user_id: user_id.to_string(),
                pins,
            });
        }
    }

    fn send(&self, m: HubMessage) {
        self.sent.fetch_add(1, Ordering::Relaxed);
        // No receivers is not an error: nobody is listening yet.
        let _ = self.tx.send(m);
    }

    pub fn receiver(&self) -> broadcast::Receiver<HubMessage> {
        self.tx.subscribe()
    }

    pub fn sent(&self) -> u64 {
        self.sent.load(Ordering::Relaxed)
    }

    pub fn connections(&self) -> usize {
        self.tx.receiver_count()
    }
}

/// The events one user receives for a hub message under `sub` (the
/// user's subscription at push time, `None` once fully unsubscribed).
pub fn events_for(user_id: &str, sub: Option<&Subscription>, msg: &HubMessage) -> Vec<PinEvent> {
    match msg {
        HubMessage::Change(c) => sub.and_then(|s| s.view(c)).into_iter().collect(),
        HubMessage::Drop { user_id: u, pins } if u == user_id => pins
            .iter()
            .map(|p| PinEvent {
                kind: EventKind::PinRemoved,
                pin: p.clone(),
                subscribed: false,
            })
            .collect(),
        HubMessage::Drop { .. } => Vec::new(),
    }
}
