//! Core building blocks of the hazard reporting pipeline.
//!
//! The stages follow the flow of a post through the system:
//!
//! * [`corpus`] ingests posts from replayable or synthetic streams and keeps
//!   only those matching a hazard dictionary.
//! * [`textprep`] cleans text and builds normalized TF-IDF matrices.
//! * [`geoloc`] resolves a location for every post.
//! * [`socialgraph`] links posts by retweet/reply into connected components.
//! * [`veracity`] removes posts classified as fake from the graph.
//! * [`topics`] fits an online LDA model and extracts per-topic graphs.
//! * [`communities`] clusters each topic graph geographically with DBSCAN.

pub mod clock;
pub mod communities;
pub mod corpus;
pub mod geoloc;
pub mod hashing;
pub mod snapshot;
pub mod socialgraph;
pub mod textprep;
pub mod topics;
pub mod veracity;

pub use clock::{Clock, ManualClock, SystemClock};
pub use corpus::{HazardDictionary, TweetRecord, Veracity};
pub use geoloc::{Coord, GeoPoint, GeoSource, Gazetteer};
pub use snapshot::SnapshotCell;
pub use socialgraph::SocialGraph;
pub use textprep::{CleanDoc, Vocabulary};
