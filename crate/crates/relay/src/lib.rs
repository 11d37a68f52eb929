//! Message relay between the pipeline and its consumers: a topic-partitioned
//! broker with consumer groups and at-least-once delivery, idempotent topic
//! collections, and a document store sharded by geohash with three replicas
//! per shard.

pub mod broker;
pub mod collection;
pub mod envelope;
pub mod faults;
pub mod geohash;
pub mod log;
pub mod store;

pub use broker::{Broker, BrokerConfig, BrokerError, Consumer, Delivery};
pub use collection::{TopicCollection, TopicCollections};
pub use envelope::Envelope;
pub use log::Durability;
pub use store::{ShardRouter, ShardedStore, StoreError, StoredDoc};
