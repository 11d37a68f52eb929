//! Streaming service around the core pipeline: micro-batching, pins,
//! subscriptions, push events, source supervision and the HTTP API.

pub mod api;
pub mod config;
pub mod events;
pub mod ingest;
pub mod liveness;
pub mod pins;
pub mod pipeline;
pub mod subscriptions;

use thiserror::Error;

pub use api::{router, Gateway};
pub use config::PipelineConfig;
pub use events::{EventHub, HubMessage};
pub use liveness::{HealthReport, Supervisor};
pub use pins::{Pin, PinChange, PinRegistry};
pub use pipeline::{BatchOutcome, Pipeline};
pub use subscriptions::{BBox, PinEvent, Subscription, SubscriptionRegistry};

/// Throughput benchmark of the store, exposed as the gateway bench op.
pub use contcomm_bench::bench;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("config: {0}")]
    Config(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown topic {0}")]
    UnknownTopic(usize),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("source: {0}")]
    Source(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Broker(#[from] contcomm_relay::BrokerError),
    #[error(transparent)]
    Store(#[from] contcomm_relay::StoreError),
}

impl GatewayError {
    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        GatewayError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// HTTP status for the error.
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::BadRequest(_) | GatewayError::Config(_) => 400,
            GatewayError::UnknownTopic(_) | GatewayError::UnknownUser(_) => 404,
            _ => 500,
        }
    }
}
