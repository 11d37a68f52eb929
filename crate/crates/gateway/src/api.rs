//! HTTP API and the server-sent event channel.
//!
//! Handlers only read a view published after each batch, so a long batch
//! never holds up a request.

use std::convert::Infallible;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use contcomm_core::{Clock, Coord, TweetRecord};
use futures_util::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::config::PipelineConfig;
use crate::events::{events_for, EventHub, HubMessage};
use crate::liveness::{HealthReport, Supervisor};
use crate::pins::{Pin, PinChange};
use crate::pipeline::{BatchOutcome, CommunityView, Pipeline, PipelineStats, TopicView};
use crate::subscriptions::{BBox, EventKind, PinEvent, Subscription, SubscriptionRegistry};
use crate::GatewayError;

/// Member posts listed per community.
pub const LATEST_POSTS: usize = 5;

/// What the API serves between batches.
#[derive(Debug, Clone, Default)]
pub struct View {
    pub topics: Vec<TopicView>,
    pub communities: Vec<CommunityView>,
    pub pins: Vec<Pin>,
    pub stats: PipelineStats,
    pub updated_at: Option<DateTime<Utc>>,
}

pub struct Gateway {
    k: usize,
    clock: Arc<dyn Clock>,
    subs: SubscriptionRegistry,
    hub: EventHub,
    pipeline: Mutex<Pipeline>,
    view: RwLock<Arc<View>>,
    supervisor: RwLock<Option<Arc<Supervisor>>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("k", &self.k).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(cfg: PipelineConfig, clock: Arc<dyn Clock>) -> Result<Arc<Self>, GatewayError> {
        let buffer = cfg.event_buffer;
        let pipeline = Pipeline::new(cfg, clock.clone())?;
        let g = Self {
            k: pipeline.config().k,
            clock,
            subs: SubscriptionRegistry::default(),
            hub: EventHub::new(buffer),
            pipeline: Mutex::new(pipeline),
            view: RwLock::new(Arc::new(View::default())),
            supervisor: RwLock::new(None),
        };
        g.refresh();
        Ok(Arc::new(g))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Pipeline> {
        self.pipeline.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn refresh_from(&self, p: &Pipeline) {
        let v = View {
            topics: p.topics(),
            communities: p.community_views(LATEST_POSTS),
            pins: p.pins().pins(),
            stats: p.stats(),
            updated_at: Some(self.clock.now()),
        };
        *self.view.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(v);
    }

    fn refresh(&self) {
        let p = self.lock();
        self.refresh_from(&p);
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn view(&self) -> Arc<View> {
        self.view.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn hub(&self) -> &EventHub {
        &self.hub
    }

    pub fn subscriptions(&self) -> &SubscriptionRegistry {
        &self.subs
    }

    pub fn set_supervisor(&self, sup: Arc<Supervisor>) {
        *self.supervisor.write().unwrap_or_else(|e| e.into_inner()) = Some(sup);
    }

    /// Runs `f` with exclusive access to the pipeline.
    pub fn with_pipeline<R>(&self, f: impl FnOnce(&mut Pipeline) -> R) -> R {
        f(&mut self.lock())
    }

    /// Runs one micro-batch and pushes the resulting pin changes. `None`
    /// when the batch was quarantined.
    pub fn ingest(&self, records: &[TweetRecord]) -> Result<Option<BatchOutcome>, GatewayError> {
        let mut p = self.lock();
        let out = p.process_or_quarantine(records)?;
        if let Some(o) = &out {
            self.hub.publish(&o.pin_changes);
        }
        self.refresh_from(&p);
        Ok(out)
    }

    /// Expires stale pins and pushes their removal. Returns the removed ids.
    pub fn expire_pins(&self, now: DateTime<Utc>) -> Vec<String> {
        let mut p = self.lock();
        let removed = p.expire_pins(now);
        self.hub.publish(&removed);
        if !removed.is_empty() {
            self.refresh_from(&p);
        }
        removed.iter().map(|c| c.pin().pin_id.clone()).collect()
    }

    /// Periodic upkeep: pin expiry and a due retrain.
    pub fn maintain(&self) -> Result<Vec<String>, GatewayError> {
        let expired = self.expire_pins(self.clock.now());
        let retrained = self.lock().maybe_retrain()?;
        if retrained {
            self.refresh();
        }
        Ok(expired)
    }

    pub fn subscribe(&self, req: SubscribeRequest) -> Result<Subscription, GatewayError> {
        let bbox = req.bbox.map(BBoxInput::into_bbox).transpose()?;
        self.subs.subscribe(&req.user_id, &req.topics, bbox, req.others, self.k, self.clock.now())
    }

    /// Drops `topic` from the user's subscription and tells the user's
    /// clients to remove that topic's pins.
    pub fn unsubscribe(&self, user_id: &str, topic: usize) -> Result<Option<Subscription>, GatewayError> {
        let rest = self.subs.unsubscribe(user_id, topic, self.k)?;
        let pins: Vec<Pin> = self.view().pins.iter().filter(|p| p.topic == topic).cloned().collect();
        self.hub.drop_for(user_id, pins);
        Ok(rest)
    }

    /// Current pins as the user sees them.
    pub fn pins_for(&self, sub: &Subscription) -> Vec<PinEvent> {
        self.view()
            .pins
            .iter()
            .filter_map(|p| sub.view(&PinChange::PinUpsert(p.clone())))
            .collect()
    }

    pub fn communities(&self, topic: Option<usize>, bbox: Option<BBox>) -> Result<Vec<CommunityView>, GatewayError> {
        if let Some(t) = topic.filter(|&t| t >= self.k) {
            return Err(GatewayError::UnknownTopic(t));
        }
        Ok(self
            .view()
            .communities
            .iter()
            .filter(|c| topic.is_none_or(|t| c.record.topic == t))
            .filter(|c| {
                bbox.is_none_or(|b| {
                    c.record
                        .centroid
                        .is_some_and(|x| b.contains(&contcomm_core::GeoPoint::device(x.lat, x.lon)))
                })
            })
            .cloned()
            .collect())
    }

    pub fn health(&self) -> Health {
        let source = self
            .supervisor
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .map(|s| s.report());
        let view = self.view();
        Health {
            status: if source.as_ref().is_none_or(|s| s.healthy || s.finished) {
                "ok"
            } else {
                "degraded"
            },
            source,
            pipeline: view.stats.clone(),
            pins: view.pins.len(),
            communities: view.communities.len(),
            model_trained: !view.topics.is_empty(),
            connections: self.hub.connections(),
            events_sent: self.hub.sent(),
            updated_at: view.updated_at,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub source: Option<HealthReport>,
    pub pipeline: PipelineStats,
    pub pins: usize,
    pub communities: usize,
    pub model_trained: bool,
    pub connections: usize,
    pub events_sent: u64,
    pub updated_at: Option<DateTime<Utc>>,
}

/// A bbox given either as `{"sw": {...}, "ne": {...}}` or as the string
/// `"south,west,north,east"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BBoxInput {
    Corners { sw: Coord, ne: Coord },
    Text(String),
}

impl BBoxInput {
    pub fn into_bbox(self) -> Result<BBox, GatewayError> {
        match self {
            BBoxInput::Corners { sw, ne } => BBox::new(sw, ne),
            BBoxInput::Text(s) => BBox::parse(&s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubscribeRequest {
    pub user_id: String,
    pub topics: Vec<usize>,
    #[serde(default)]
    pub bbox: Option<BBoxInput>,
    #[serde(default)]
    pub others: Option<bool>,
}

#[derive(Debug, Deserialize)]
pub struct CommunityQuery {
    pub topic: Option<usize>,
    pub bbox: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    pub user_id: String,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

pub fn router(g: Arc<Gateway>) -> Router {
    Router::new()
        .route("/subscriptions", post(subscribe))
        .route("/subscriptions/{user_id}/{topic}", delete(unsubscribe))
        .route("/topics", get(topics))
        .route("/communities", get(communities))
        .route("/health", get(health))
        .route("/events", get(events))
        .with_state(g)
}

async fn subscribe(
    State(g): State<Arc<Gateway>>,
    Json(req): Json<SubscribeRequest>,
) -> Result<(StatusCode, Json<Subscription>), GatewayError> {
    Ok((StatusCode::CREATED, Json(g.subscribe(req)?)))
}

#[derive(Debug, Serialize)]
struct Unsubscribed {
    user_id: String,
    topic: usize,
    remaining: Option<Subscription>,
}

async fn unsubscribe(
    State(g): State<Arc<Gateway>>,
    Path((user_id, topic)): Path<(String, usize)>,
) -> Result<Json<Unsubscribed>, GatewayError> {
    let remaining = g.unsubscribe(&user_id, topic)?;
    Ok(Json(Unsubscribed {
        user_id,
        topic,
        remaining,
    }))
}

#[derive(Debug, Serialize)]
struct TopicsBody {
    k: usize,
    topics: Vec<TopicView>,
}

async fn topics(State(g): State<Arc<Gateway>>) -> Json<TopicsBody> {
    Json(TopicsBody {
        k: g.k,
        topics: g.view().topics.clone(),
    })
}

async fn communities(
    State(g): State<Arc<Gateway>>,
    Query(q): Query<CommunityQuery>,
) -> Result<Json<Vec<CommunityView>>, GatewayError> {
    let bbox = q.bbox.as_deref().map(BBox::parse).transpose()?;
    Ok(Json(g.communities(q.topic, bbox)?))
}

async fn health(State(g): State<Arc<Gateway>>) -> Json<Health> {
    Json(g.health())
}

fn sse_event(e: &PinEvent) -> Event {
    Event::default()
        .event(e.kind.as_str())
        .json_data(e)
        .unwrap_or_else(|_| Event::default().event("error"))
}

struct Conn {
    g: Arc<Gateway>,
    user_id: String,
    rx: tokio::sync::broadcast::Receiver<HubMessage>,
    queued: std::collections::VecDeque<PinEvent>,
}

/// Push channel for one user: the pins currently visible to them as
/// `pin_upsert`, then every change that matches their subscription at the
/// moment it is pushed. A connection that falls behind the hub buffer is
/// closed; the client reconnects and gets a fresh initial state.
async fn events(
    State(g): State<Arc<Gateway>>,
    Query(q): Query<EventsQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, GatewayError> {
    let sub = g
        .subs
        .get(&q.user_id)
        .ok_or_else(|| GatewayError::UnknownUser(q.user_id.clone()))?;
    // Subscribe to the hub before reading the pins so nothing falls between.
    let rx = g.hub.receiver();
    let queued = g.pins_for(&sub).into_iter().collect();
    let conn = Conn {
        g,
        user_id: q.user_id,
        rx,
        queued,
    };
    let s = stream::unfold(conn, |mut c| async move {
        loop {
            if let Some(e) = c.queued.pop_front() {
                let ev = sse_event(&e);
                return Some((Ok(ev), c));
            }
            match c.rx.recv().await {
                Ok(msg) => {
                    let sub = c.g.subs.get(&c.user_id);
                    c.queued.extend(events_for(&c.user_id, sub.as_ref(), &msg));
                }
                Err(RecvError::Lagged(n)) => {
                    tracing::warn!(user = %c.user_id, missed = n, "dropping slow event consumer");
                    return None;
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(s).keep_alive(KeepAlive::default()))
}

impl PinEvent {
    pub fn is_removal(&self) -> bool {
        self.kind == EventKind::PinRemoved
    }
}
