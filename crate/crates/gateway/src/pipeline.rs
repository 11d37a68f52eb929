//! Micro-batch pipeline: social graph, veracity filter, topic graphs and
//! geographic communities, followed by relay publication and pin updates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use contcomm_core::communities::{all_communities, community_report, CommunityGraph, CommunityRecord};
use contcomm_core::corpus::{CorpusError, HazardDictionary, StreamFilter};
use contcomm_core::geoloc::{resolve, Gazetteer};
use contcomm_core::socialgraph::{build_graph, Node, PendingLinks, SocialGraph};
use contcomm_core::topics::{memberships, topic_graphs_from, OldaConfig, TopicMembership, TopicModel};
use contcomm_core::veracity::{filter_graph, Classifier, LinearFakeNewsModel, RemoteClassifier, RemoteClassifierSpec, VeracityError, VeracityVerdict};
use contcomm_core::{CleanDoc, Clock, SnapshotCell, TweetRecord, Veracity, Vocabulary};
use contcomm_relay::{Broker, BrokerConfig, Durability, Envelope, ShardRouter, ShardedStore, TopicCollections};
use serde::Serialize;

use crate::config::{PipelineConfig, VeracityConfig};
use crate::pins::{PinChange, PinRegistry};
use crate::GatewayError;

/// Consumer group that turns relay envelopes into topic collections.
pub const COLLECTOR_GROUP: &str = "topic-collections";

/// Passes everything.
struct PassAll;

impl Classifier for PassAll {
    fn judge(&self, doc_id: &str, _: &CleanDoc, _: &str) -> Result<VeracityVerdict, VeracityError> {
        Ok(VeracityVerdict::from_score(doc_id, 0.0))
    }
}

/// Uses the label each record arrived with; unlabeled posts pass.
struct Labels(HashMap<String, Veracity>);

impl Classifier for Labels {
    fn judge(&self, doc_id: &str, _: &CleanDoc, _: &str) -> Result<VeracityVerdict, VeracityError> {
        let label = self.0.get(doc_id).copied().unwrap_or_default();
        Ok(VeracityVerdict {
            doc_id: doc_id.to_string(),
            label,
            score: if label == Veracity::Fake { 1.0 } else { 0.0 },
        })
    }
}

enum Judge {
    PassAll,
    Labels,
    Model(Box<dyn Classifier>),
}

/// What one batch did.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchOutcome {
    pub batch_id: u64,
    pub accepted: usize,
    pub duplicates: usize,
    pub fake_removed: Vec<String>,
    pub retrained: bool,
    pub communities: usize,
    pub published: usize,
    pub pin_changes: Vec<PinChange>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineStats {
    pub batches: u64,
    pub records: u64,
    pub fake_removed: u64,
    pub retrains: u64,
    pub dead_lettered: u64,
    pub window_nodes: usize,
}

/// A post as shown next to its community.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PostView {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

/// A community as served to clients.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CommunityView {
    #[serde(flatten)]
    pub record: CommunityRecord,
    pub member_count: usize,
    /// Newest member posts first.
    pub latest: Vec<PostView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct WordWeight {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TopicView {
    pub topic: usize,
    pub words: Vec<WordWeight>,
}

/// Slot for the active topic model; empty until enough posts arrived.
#[derive(Debug, Clone, Default)]
pub struct ModelSlot {
    pub model: Option<TopicModel>,
    pub trained_at: Option<DateTime<Utc>>,
}

/// Posts currently on the map, with the time each entered the pipeline.
#[derive(Debug, Clone, Default)]
struct Window {
    nodes: BTreeMap<String, (Node, DateTime<Utc>)>,
    edges: BTreeSet<(String, String)>,
}

impl Window {
    fn graph(&self) -> SocialGraph {
        SocialGraph::from_parts(self.nodes.values().map(|(n, _)| n.clone()), self.edges.iter().cloned())
    }

    fn link(&mut self, a: &str, b: &str) {
        if a != b && self.nodes.contains_key(a) && self.nodes.contains_key(b) {
            let e = if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
            self.edges.insert(e);
        }
    }

    fn prune(&mut self, cutoff: DateTime<Utc>) {
        self.nodes.retain(|_, (_, at)| *at >= cutoff);
        let nodes = &self.nodes;
        self.edges.retain(|(a, b)| nodes.contains_key(a) && nodes.contains_key(b));
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    clock: Arc<dyn Clock>,
    dict: Arc<HazardDictionary>,
    gazetteer: Gazetteer,
    judge: Judge,
    model: Arc<SnapshotCell<ModelSlot>>,
    retained: Vec<CleanDoc>,
    window: Window,
    pending: PendingLinks,
    seen: HashSet<String>,
    broker: Arc<Broker>,
    store: Arc<ShardedStore>,
    collections: Arc<TopicCollections>,
    pins: PinRegistry,
    communities: Vec<CommunityGraph>,
    memberships: Vec<TopicMembership>,
    next_batch: u64,
    stats: PipelineStats,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("stats", &self.stats).finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let dict = match &cfg.dictionary {
            Some(p) => contcomm_core::corpus::load_dictionary(p).map_err(|e| GatewayError::Config(e.to_string()))?,
            None => HazardDictionary::builtin_flood(),
        };
        let gazetteer = match &cfg.gazetteer {
            Some(p) => Gazetteer::load(p).map_err(|e| GatewayError::Config(e.to_string()))?,
            None => Gazetteer::builtin(),
        };
        let judge = match &cfg.veracity {
            VeracityConfig::None => Judge::PassAll,
            VeracityConfig::Labels => Judge::Labels,
            VeracityConfig::Linear { model } => {
                let text = std::fs::read_to_string(model).map_err(|e| GatewayError::Config(format!("{}: {e}", model.display())))?;
                let m: LinearFakeNewsModel = serde_json::from_str(&text).map_err(|e| GatewayError::Config(e.to_string()))?;
                Judge::Model(Box::new(m))
            }
            VeracityConfig::Remote {
                endpoint,
                timeout_ms,
                fallback,
            } => Judge::Model(Box::new(
                RemoteClassifier::new(RemoteClassifierSpec {
                    endpoint: endpoint.clone(),
                    timeout_ms: *timeout_ms,
                    fallback: *fallback,
                })
                .map_err(|e| GatewayError::Config(e.to_string()))?,
            )),
        };
        let durability = match &cfg.relay.log_dir {
            Some(dir) => Durability::Disk {
                dir: dir.clone(),
                fsync: cfg.relay.fsync,
            },
            None => Durability::Memory,
        };
        let broker = Arc::new(Broker::open(
            BrokerConfig {
                k: cfg.k,
                capacity: cfg.relay.capacity,
                ack_timeout: chrono::Duration::seconds(cfg.relay.ack_timeout_s as i64),
                durability,
                ..Default::default()
            },
            clock.clone(),
        )?);
        for t in 0..cfg.k {
            broker.subscribe(t, COLLECTOR_GROUP)?;
        }
        let store = Arc::new(ShardedStore::new(ShardRouter::new(cfg.relay.shards, cfg.relay.geohash_precision)));
        Ok(Self {
            pins: PinRegistry::new(cfg.retention()),
            pending: PendingLinks::new(cfg.retention()),
            collections: Arc::new(TopicCollections::new(cfg.k)),
            dict: Arc::new(dict),
            gazetteer,
            judge,
            model: Arc::new(SnapshotCell::new(ModelSlot::default())),
            retained: Vec::new(),
            window: Window::default(),
            seen: HashSet::new(),
            broker,
            store,
            communities: Vec::new(),
            memberships: Vec::new(),
            next_batch: 0,
            stats: PipelineStats::default(),
            cfg,
            clock,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn dictionary(&self) -> Arc<HazardDictionary> {
        self.dict.clone()
    }

    /// Filter matching the configured dictionary.
    pub fn stream_filter(&self) -> StreamFilter {
        StreamFilter::new(self.dict.clone())
    }

    pub fn model(&self) -> Arc<SnapshotCell<ModelSlot>> {
        self.model.clone()
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    pub fn store(&self) -> &Arc<ShardedStore> {
        &self.store
    }

    pub fn collections(&self) -> &Arc<TopicCollections> {
        &self.collections
    }

    pub fn pins(&self) -> &PinRegistry {
        &self.pins
    }

    /// Social graph of every post still in the window.
    pub fn window_graph(&self) -> SocialGraph {
        self.window.graph()
    }

    pub fn communities(&self) -> &[CommunityGraph] {
        &self.communities
    }

    pub fn memberships(&self) -> &[TopicMembership] {
        &self.memberships
    }

    pub fn community_records(&self) -> Vec<CommunityRecord> {
        let mut recs: Vec<CommunityRecord> = self.communities.iter().map(CommunityRecord::from).collect();
        recs.sort_by(|a, b| a.topic.cmp(&b.topic).then_with(|| a.area_id.cmp(&b.area_id)));
        recs
    }

    /// Communities as a JSON report sorted by topic and area.
    pub fn report(&self) -> String {
        community_report(&self.communities)
    }

    pub fn stats(&self) -> PipelineStats {
        PipelineStats {
            window_nodes: self.window.nodes.len(),
            ..self.stats.clone()
        }
    }

    /// Top words per topic of the active model; empty before the first
    /// training.
    pub fn topics(&self) -> Vec<TopicView> {
        let slot = self.model.load();
        let Some(m) = &slot.model else {
            return Vec::new();
        };
        (0..m.k)
            .map(|t| TopicView {
                topic: t,
                words: m
                    .top_words(t, self.cfg.top_words)
                    .into_iter()
                    .map(|(word, weight)| WordWeight { word, weight })
                    .collect(),
            })
            .collect()
    }

    /// Community records with up to `latest` newest member posts each.
    pub fn community_views(&self, latest: usize) -> Vec<CommunityView> {
        self.community_records()
            .into_iter()
            .map(|record| {
                let mut posts: Vec<PostView> = record
                    .member_ids
                    .iter()
                    .filter_map(|id| self.window.nodes.get(id))
                    .map(|(n, _)| PostView {
                        id: n.id.clone(),
                        text: n.text.clone(),
                        created_at: n.created_at,
                    })
                    .collect();
                posts.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
                posts.truncate(latest);
                CommunityView {
                    member_count: record.member_ids.len(),
                    record,
                    latest: posts,
                }
            })
            .collect()
    }

    fn train(&self, docs: &[CleanDoc]) -> Result<TopicModel, GatewayError> {
        let docs: Vec<CleanDoc> = docs.iter().filter(|d| !d.is_empty()).cloned().collect();
        let vocab = Vocabulary::build(&docs, self.cfg.olda.max_features).map_err(|e| GatewayError::stage("topics", e))?;
        let mut m = TopicModel::new(
            vocab,
            OldaConfig {
                k: self.cfg.k,
                seed: self.cfg.seeds.olda,
                ..Default::default()
            },
        )
        .map_err(|e| GatewayError::stage("topics", e))?;
        m.fit_passes(&docs, self.cfg.olda.train_batch, self.cfg.olda.passes)
            .map_err(|e| GatewayError::stage("topics", e))?;
        Ok(m)
    }

    fn retrain_due(&self, now: DateTime<Utc>) -> bool {
        let slot = self.model.load();
        match (&slot.model, slot.trained_at) {
            (None, _) => self.retained.iter().filter(|d| !d.is_empty()).count() >= self.cfg.olda.min_train_docs.max(1),
            (Some(_), Some(at)) => now - at >= self.cfg.retrain_interval(),
            (Some(_), None) => true,
        }
    }

    /// Retrains on every retained post if the retrain interval has passed,
    /// swapping the new model in. Returns whether it retrained.
    pub fn maybe_retrain(&mut self) -> Result<bool, GatewayError> {
        let now = self.clock.now();
        if !self.retrain_due(now) {
            return Ok(false);
        }
        let m = self.train(&self.retained)?;
        self.model.swap(ModelSlot {
            model: Some(m),
            trained_at: Some(now),
        });
        self.stats.retrains += 1;
        Ok(true)
    }

    /// Runs one micro-batch. Nothing is committed unless every stage
    /// succeeds. An empty batch (after dropping already seen ids) changes
    /// nothing.
    pub fn process_batch(&mut self, records: &[TweetRecord]) -> Result<BatchOutcome, GatewayError> {
        let now = self.clock.now();
        let mut fresh: Vec<TweetRecord> = Vec::with_capacity(records.len());
        let mut ids = HashSet::new();
        for r in records {
            if !self.seen.contains(&r.id) && ids.insert(r.id.clone()) {
                fresh.push(r.clone());
            }
        }
        let duplicates = records.len() - fresh.len();
        if fresh.is_empty() {
            return Ok(BatchOutcome {
                duplicates,
                ..Default::default()
            });
        }
        let batch_id = self.next_batch;

        // Graph of the batch.
        let contents: HashMap<String, CleanDoc> = fresh
            .iter()
            .map(|r| (r.id.clone(), CleanDoc::from_text(&r.id, &r.text)))
            .collect();
        let locs = fresh.iter().map(|r| (r.id.clone(), resolve(r, &self.gazetteer))).collect();
        let built = build_graph(&fresh, &contents, &locs).map_err(|e| GatewayError::stage("socialgraph", e))?;

        // Veracity.
        let labels;
        let judge: &dyn Classifier = match &self.judge {
            Judge::PassAll => &PassAll,
            Judge::Labels => {
                labels = Labels(fresh.iter().map(|r| (r.id.clone(), r.veracity)).collect());
                &labels
            }
            Judge::Model(c) => c.as_ref(),
        };
        let filtered = filter_graph(std::slice::from_ref(&built.graph), judge).map_err(|e| GatewayError::stage("veracity", e))?;
        let kept = filtered.graphs.into_iter().next().unwrap_or_default();
        let fake: Vec<String> = filtered.verdicts.iter().filter(|v| v.label == Veracity::Fake).map(|v| v.doc_id.clone()).collect();
        let verdicts: HashMap<&str, &VeracityVerdict> = filtered.verdicts.iter().map(|v| (v.doc_id.as_str(), v)).collect();

        // Window update, with links to posts of earlier batches.
        let mut window = self.window.clone();
        let mut pending = self.pending.clone();
        window.prune(now - self.cfg.retention());
        pending.expire(now);
        for n in kept.nodes() {
            window.nodes.insert(n.id.clone(), (n.clone(), now));
        }
        for (a, b) in kept.edges() {
            window.link(a, b);
        }
        for d in &built.dangling {
            if fake.contains(&d.from) {
                continue;
            }
            if window.nodes.contains_key(&d.to) {
                window.link(&d.from, &d.to);
            } else {
                pending.add(d, now);
            }
        }
        for n in kept.nodes() {
            for from in pending.arrived(&n.id) {
                window.link(&from, &n.id);
            }
        }

        // Topic model: train when due, otherwise an online step on the batch.
        let mut retained = self.retained.clone();
        retained.extend(kept.nodes().map(|n| n.content.clone()).filter(|d| !d.is_empty()));
        let slot = self.model.load();
        let due = match (&slot.model, slot.trained_at) {
            (None, _) => retained.len() >= self.cfg.olda.min_train_docs.max(1),
            (Some(_), Some(at)) => now - at >= self.cfg.retrain_interval(),
            (Some(_), None) => true,
        };
        let (next_model, retrained) = if due {
            (Some(self.train(&retained)?), true)
        } else if let Some(m) = &slot.model {
            let mut m = m.clone();
            let docs: Vec<CleanDoc> = kept.nodes().map(|n| n.content.clone()).collect();
            m.fit_online(&docs).map_err(|e| GatewayError::stage("topics", e))?;
            (Some(m), false)
        } else {
            (None, false)
        };

        // Topic graphs and communities over the whole window.
        let graph = window.graph();
        let (members, communities) = match &next_model {
            Some(m) => {
                let members = memberships(std::slice::from_ref(&graph), m, self.cfg.eps_c, self.cfg.membership);
                let tgs = topic_graphs_from(std::slice::from_ref(&graph), m.k, &members);
                (members, all_communities(&tgs, self.cfg.eps_l_km, self.cfg.min_pts))
            }
            None => (Vec::new(), Vec::new()),
        };

        // Side effects: tweets to the store, <tweet, topic> pairs to the relay.
        for r in &fresh {
            let loc = locs_get(&locs, &r.id);
            let label = verdicts.get(r.id.as_str()).map_or(Veracity::Unchecked, |v| v.label);
            let doc = serde_json::json!({
                "id": r.id,
                "text": r.text,
                "created_at": r.created_at,
                "user_id": r.user_id,
                "veracity": label,
                "batch": batch_id,
            });
            self.store.put("tweets", &r.id, loc, doc)?;
        }
        let mut published = 0;
        let batch_ids: BTreeSet<&str> = kept.nodes().map(|n| n.id.as_str()).collect();
        for m in &members {
            if !batch_ids.contains(m.doc_id.as_str()) {
                continue;
            }
            let loc = locs_get(&locs, &m.doc_id);
            for &t in &m.members {
                self.broker.publish(Envelope::new(m.doc_id.clone(), t, loc, now))?;
                published += 1;
            }
        }
        self.drain_relay()?;

        // Commit.
        if let Some(m) = next_model {
            if retrained {
                self.model.swap(ModelSlot {
                    model: Some(m),
                    trained_at: Some(now),
                });
                self.stats.retrains += 1;
            } else {
                self.model.swap(ModelSlot {
                    model: Some(m),
                    trained_at: slot.trained_at,
                });
            }
        }
        let pin_changes = self.pins.reconcile(&communities, now);
        self.window = window;
        self.pending = pending;
        self.retained = retained;
        self.seen.extend(fresh.iter().map(|r| r.id.clone()));
        self.memberships = members;
        self.communities = communities;
        self.next_batch += 1;
        self.stats.batches += 1;
        self.stats.records += fresh.len() as u64;
        self.stats.fake_removed += fake.len() as u64;
        Ok(BatchOutcome {
            batch_id,
            accepted: fresh.len(),
            duplicates,
            fake_removed: fake,
            retrained,
            communities: self.communities.len(),
            published,
            pin_changes,
        })
    }

    /// The collector group appends every pending envelope to its topic
    /// collection and acknowledges it.
    fn drain_relay(&self) -> Result<(), GatewayError> {
        for t in 0..self.cfg.k {
            loop {
                let batch = self.broker.poll(t, COLLECTOR_GROUP, 256)?;
                if batch.is_empty() {
                    break;
                }
                for d in batch {
                    self.collections.append(t, &d.envelope.tweet_id, d.envelope.geo);
                    self.broker.ack(t, COLLECTOR_GROUP, d.offset)?;
                }
            }
        }
        Ok(())
    }

    /// Processes a batch, retrying once; a batch that fails twice goes to
    /// the dead-letter file and the pipeline moves on.
    pub fn process_or_quarantine(&mut self, records: &[TweetRecord]) -> Result<Option<BatchOutcome>, GatewayError> {
        let batch_id = self.next_batch;
        let first = match self.process_batch(records) {
            Ok(o) => return Ok(Some(o)),
            Err(e) => e,
        };
        tracing::warn!(batch_id, error = %first, "batch failed, retrying once");
        match self.process_batch(records) {
            Ok(o) => Ok(Some(o)),
            Err(second) => {
                tracing::error!(batch_id, error = %second, "batch quarantined");
                dead_letter(&self.cfg.dead_letter, batch_id, &second, records)?;
                self.next_batch += 1;
                self.stats.dead_lettered += 1;
                Ok(None)
            }
        }
    }

    /// Expires pins untouched past retention.
    pub fn expire_pins(&mut self, now: DateTime<Utc>) -> Vec<PinChange> {
        self.pins.expire(now).into_iter().map(PinChange::PinRemoved).collect()
    }

    /// Splits `records` into batches of `batch_max` and runs them in order.
    pub fn replay(&mut self, records: &[TweetRecord]) -> Result<Vec<BatchOutcome>, GatewayError> {
        let mut out = Vec::new();
        for chunk in records.chunks(self.cfg.batch_max) {
            if let Some(o) = self.process_or_quarantine(chunk)? {
                out.push(o);
            }
        }
        Ok(out)
    }

    /// Reads a JSON-lines file, keeps records matching the dictionary and
    /// replays them.
    pub fn replay_file(&mut self, path: &Path) -> Result<Vec<BatchOutcome>, GatewayError> {
        let records = read_filtered(path, self.stream_filter())?;
        self.replay(&records)
    }
}

fn locs_get(locs: &HashMap<String, contcomm_core::GeoPoint>, id: &str) -> contcomm_core::GeoPoint {
    locs.get(id).copied().unwrap_or_else(contcomm_core::GeoPoint::unresolved)
}

/// Records of a JSON-lines file accepted by `filter`, in file order.
pub fn read_filtered(path: &Path, filter: StreamFilter) -> Result<Vec<TweetRecord>, GatewayError> {
    let source = contcomm_core::corpus::FileReplay::open(path.to_path_buf()).map_err(|e: CorpusError| GatewayError::Source(e.to_string()))?;
    let stream = contcomm_core::corpus::TweetStream::new(Box::new(source), filter, None);
    Ok(stream.collect())
}

/// Appends a quarantined batch: one line with the batch id and error,
/// then each record.
pub fn dead_letter(path: &Path, batch_id: u64, err: &GatewayError, records: &[TweetRecord]) -> Result<(), GatewayError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    let head = serde_json::json!({"batch_id": batch_id, "error": err.to_string(), "records": records.len()});
    let mut text = format!("{head}\n");
    for r in records {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| GatewayError::Io(e.to_string()))
}
