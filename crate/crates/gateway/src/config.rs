//! Pipeline configuration, read from TOML. Every field has a default, so
//! an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use chrono::Duration;
use contcomm_core::corpus::StreamSource;
use contcomm_core::topics::MembershipRule;
use contcomm_core::veracity::Fallback;
use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of topics.
    pub k: usize,
    /// Topic membership threshold, in (0, 1].
    pub eps_c: f64,
    /// DBSCAN neighbourhood radius in kilometres.
    pub eps_l_km: f64,
    /// DBSCAN core threshold, counting the point itself.
    pub min_pts: usize,
    pub membership: MembershipRule,
    pub retrain_interval_s: u64,
    pub liveness_interval_ms: u64,
    pub pin_retention_s: u64,
    /// Micro-batch cadence; 0 processes every record on its own.
    pub batch_interval_ms: u64,
    /// A batch is cut early once it holds this many records.
    pub batch_max: usize,
    pub top_words: usize,
    pub seeds: Seeds,
    pub olda: OldaSettings,
    pub veracity: VeracityConfig,
    /// Hazard dictionary file; the bundled flood dictionary when absent.
    pub dictionary: Option<PathBuf>,
    /// Gazetteer TSV; the bundled one when absent.
    pub gazetteer: Option<PathBuf>,
    pub source: SourceConfig,
    pub dead_letter: PathBuf,
    pub listen: String,
    pub relay: RelaySettings,
    /// Events buffered per push connection before a slow client is dropped.
    pub event_buffer: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 6,
            eps_c: contcomm_core::topics::DEFAULT_EPS_C,
            eps_l_km: contcomm_core::communities::DEFAULT_EPS_KM,
            min_pts: contcomm_core::communities::DEFAULT_MIN_PTS,
            membership: MembershipRule::Posterior,
            retrain_interval_s: 3600,
            liveness_interval_ms: 30_000,
            pin_retention_s: 24 * 3600,
            batch_interval_ms: 5000,
            batch_max: 1000,
            top_words: 10,
            seeds: Seeds::default(),
            olda: OldaSettings::default(),
            veracity: VeracityConfig::default(),
            dictionary: None,
            gazetteer: None,
            source: SourceConfig::default(),
            dead_letter: PathBuf::from("dead-letter.jsonl"),
            listen: "127.0.0.1:8080".into(),
            relay: RelaySettings::default(),
            event_buffer: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub olda: u64,
    pub synthetic: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OldaSettings {
    /// Passes over the retained corpus at each retrain.
    pub passes: usize,
    pub train_batch: usize,
    pub max_features: Option<usize>,
    /// No model is trained before this many posts have been kept.
    pub min_train_docs: usize,
}

impl Default for OldaSettings {
    fn default() -> Self {
        Self {
            passes: 10,
            train_batch: 256,
            max_features: Some(5000),
            min_train_docs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VeracityConfig {
    /// Every post passes.
    None,
    /// Trust the `veracity` field the records arrive with.
    #[default]
    Labels,
    /// A trained linear model stored as JSON.
    Linear { model: PathBuf },
    Remote {
        endpoint: String,
        timeout_ms: u64,
        #[serde(default)]
        fallback: Fallback,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    File { path: PathBuf, rate: Option<f64> },
    Synthetic { count: Option<usize>, rate: Option<f64> },
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self::Synthetic {
            count: None,
            rate: Some(20.0),
        }
    }
}

impl SourceConfig {
    pub fn stream_source(&self, seed: u64) -> StreamSource {
        match self {
            SourceConfig::File { path, rate } => StreamSource::FileReplay {
                path: path.clone(),
                rate: *rate,
            },
            SourceConfig::Synthetic { count, rate } => StreamSource::Synthetic {
                seed,
                count: *count,
                rate: *rate,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaySettings {
    pub shards: usize,
    pub geohash_precision: usize,
    pub capacity: usize,
    pub ack_timeout_s: u64,
    /// Partition logs go here when set; in memory otherwise.
    pub log_dir: Option<PathBuf>,
    pub fsync: bool,
}

impl Default for RelaySettings {
    fn default() -> Self {
        Self {
            shards: 8,
            geohash_precision: 4,
            capacity: 100_000,
            ack_timeout_s: 30,
            log_dir: None,
            fsync: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let cfg: Self = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.eps_c > 0.0 && self.eps_c <= 1.0) {
            return bad("eps_c must lie in (0, 1]");
        }
        if !(self.eps_l_km > 0.0 && self.eps_l_km.is_finite()) {
            return bad("eps_l_km must be positive");
        }
        if self.min_pts == 0 {
            return bad("min_pts must be positive");
        }
        if self.retrain_interval_s == 0 || self.liveness_interval_ms == 0 || self.pin_retention_s == 0 {
            return bad("intervals and retention must be positive");
        }
        if self.batch_max == 0 || self.top_words == 0 || self.event_buffer == 0 {
            return bad("batch_max, top_words and event_buffer must be positive");
        }
        if self.olda.passes == 0 || self.olda.train_batch == 0 {
            return bad("olda passes and train_batch must be positive");
        }
        if self.relay.shards == 0 || !(1..=12).contains(&self.relay.geohash_precision) || self.relay.capacity == 0 {
            return bad("relay needs shards > 0, geohash precision 1..=12 and capacity > 0");
        }
        Ok(())
    }

    pub fn retention(&self) -> Duration {
        Duration::seconds(self.pin_retention_s as i64)
    }

    pub fn retrain_interval(&self) -> Duration {
        Duration::seconds(self.retrain_interval_s as i64)
    }

    pub fn liveness_interval(&self) -> Duration {
        Duration::milliseconds(self.liveness_interval_ms as i64)
    }
}
