//! Document store sharded by geohash prefix, three replicas per shard,
//! majority writes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard};

use contcomm_core::hashing::fnv1a64;
use contcomm_core::GeoPoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geohash;

pub const REPLICAS: usize = 3;
const QUORUM: usize = REPLICAS / 2 + 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("shard {0} unavailable")]
    ShardUnavailable(usize),
    #[error("no document {key:?} in {collection:?}")]
    UnknownKey { collection: String, key: String },
    #[error("shard {shard} has {up} of {REPLICAS} replicas up")]
    QuorumLost { shard: usize, up: usize },
    #[error("no shard {0}")]
    NoSuchShard(usize),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Maps locations to shards. Resolved points go to
/// `fnv1a(geohash(point, precision)) mod shards`; unresolved points go to
/// the overflow shard, index `shards`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShardRouter {
    pub shards: usize,
    pub precision: usize,
}

impl Default for ShardRouter {
    fn default() -> Self {
        Self {
            shards: 8,
            precision: 4,
        }
    }
}

impl ShardRouter {
    pub fn new(shards: usize, precision: usize) -> Self {
        assert!(shards >= 1 && (1..=12).contains(&precision));
        Self { shards, precision }
    }

    pub fn overflow(&self) -> usize {
        self.shards
    }

    /// Regular shards plus the overflow shard.
    pub fn total(&self) -> usize {
        self.shards + 1
    }

    pub fn route(&self, geo: &GeoPoint) -> usize {
        match geo.coord() {
            Some(c) => {
                let cell = geohash::encode(c.lat, c.lon, self.precision);
                (fnv1a64(cell.as_bytes()) % self.shards as u64) as usize
            }
            None => self.overflow(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDoc {
    pub key: String,
    pub version: u64,
    pub geo: GeoPoint,
    pub doc: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replica {
    pub up: bool,
    /// collection → key → document
    pub data: BTreeMap<String, BTreeMap<String, StoredDoc>>,
}

#[derive(Debug)]
struct Shard {
    replicas: Mutex<Vec<Replica>>,
    available: AtomicBool,
}

#[derive(Debug)]
pub struct ShardedStore {
    router: ShardRouter,
    shards: Vec<Shard>,
    version: AtomicU64,
}

impl ShardedStore {
    pub fn new(router: ShardRouter) -> Self {
        let shards = (0..router.total())
            .map(|_| Shard {
                replicas: Mutex::new(vec![
                    Replica {
                        up: true,
                        ..Default::default()
                    };
                    REPLICAS
                ]),
                available: AtomicBool::new(true),
            })
            .collect();
        Self {
            router,
            shards,
            version: AtomicU64::new(0),
        }
    }

    pub fn router(&self) -> ShardRouter {
        self.router
    }

    fn shard(&self, i: usize) -> Result<&Shard, StoreError> {
        let s = self.shards.get(i).ok_or(StoreError::NoSuchShard(i))?;
        if !s.available.load(Ordering::SeqCst) {
            return Err(StoreError::ShardUnavailable(i));
        }
        Ok(s)
    }

    fn lock(s: &Shard) -> MutexGuard<'_, Vec<Replica>> {
        s.replicas.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Writes to every live replica of the key's shard. Acknowledged only
    /// when a majority of replicas is live.
    pub fn put(&self, collection: &str, key: &str, geo: GeoPoint, doc: serde_json::Value) -> Result<u64, StoreError> {
        let sid = self.router.route(&geo);
        let shard = self.shard(sid)?;
        let mut reps = Self::lock(shard);
        let up = reps.iter().filter(|r| r.up).count();
        if up < QUORUM {
            return Err(StoreError::QuorumLost { shard: sid, up });
        }
        let version = self.version.fetch_add(1, Ordering::SeqCst) + 1;
        let stored = StoredDoc {
            key: key.to_string(),
            version,
            geo,
            doc,
        };
        for r in reps.iter_mut().filter(|r| r.up) {
            r.data
                .entry(collection.to_string())
                .or_default()
                .insert(key.to_string(), stored.clone());
        }
        Ok(version)
    }

    fn read_shard(&self, sid: usize, collection: &str, key: &str) -> Result<Option<StoredDoc>, StoreError> {
        let reps = Self::lock(self.shard(sid)?);
        Ok(reps
            .iter()
            .filter(|r| r.up)
            .filter_map(|r| r.data.get(collection).and_then(|c| c.get(key)))
            .max_by_key(|d| d.version)
            .cloned())
    }

    /// Reads from the shard `geo` routes to.
    pub fn get_at(&self, collection: &str, key: &str, geo: &GeoPoint) -> Result<StoredDoc, StoreError> {
        self.read_shard(self.router.route(geo), collection, key)?
            .ok_or_else(|| StoreError::UnknownKey {
                collection: collection.into(),
                key: key.into(),
            })
    }

    /// Reads by key alone: every shard is asked and the newest version
    /// wins. Unavailable shards are skipped unless nothing is found.
    pub fn get(&self, collection: &str, key: &str) -> Result<StoredDoc, StoreError> {
        let mut best: Option<StoredDoc> = None;
        let mut down = None;
        for sid in 0..self.shards.len() {
            match self.read_shard(sid, collection, key) {
                Ok(Some(d)) if best.as_ref().is_none_or(|b| d.version > b.version) => best = Some(d),
                Ok(_) => {}
                Err(e) => down = Some(e),
            }
        }
        match (best, down) {
            (Some(d), _) => Ok(d),
            (None, Some(e)) => Err(e),
            (None, None) => Err(StoreError::UnknownKey {
                collection: collection.into(),
                key: key.into(),
            }),
        }
    }

    /// Documents in `collection` across all shards.
    pub fn count(&self, collection: &str) -> Result<usize, StoreError> {
        let mut n = 0;
        for sid in 0..self.shards.len() {
            let reps = Self::lock(self.shard(sid)?);
            n += reps
                .iter()
                .filter(|r| r.up)
                .map(|r| r.data.get(collection).map_or(0, BTreeMap::len))
                .max()
                .unwrap_or(0);
        }
        Ok(n)
    }

    /// Documents in `collection` satisfying `pred`, found by scanning every
    /// shard's newest live replica.
    pub fn count_where(&self, collection: &str, pred: impl Fn(&StoredDoc) -> bool) -> Result<usize, StoreError> {
        let mut n = 0;
        for sid in 0..self.shards.len() {
            let reps = Self::lock(self.shard(sid)?);
            if let Some(docs) = reps
                .iter()
                .filter(|r| r.up)
                .filter_map(|r| r.data.get(collection))
                .max_by_key(|c| c.len())
            {
                n += docs.values().filter(|d| pred(d)).count();
            }
        }
        Ok(n)
    }

    pub fn shard_count(&self, sid: usize, collection: &str) -> usize {
        self.shards.get(sid).map_or(0, |s| {
            Self::lock(s)
                .iter()
                .filter(|r| r.up)
                .map(|r| r.data.get(collection).map_or(0, BTreeMap::len))
                .max()
                .unwrap_or(0)
        })
    }

    /// Fault injection: a downed replica takes no writes and serves no reads.
    pub fn kill(&self, sid: usize, replica: usize) -> Result<(), StoreError> {
        let s = self.shards.get(sid).ok_or(StoreError::NoSuchShard(sid))?;
        if let Some(r) = Self::lock(s).get_mut(replica) {
            r.up = false;
        }
        Ok(())
    }

    /// Brings a replica back and copies the state of a live peer onto it.
    pub fn revive(&self, sid: usize, replica: usize) -> Result<(), StoreError> {
        let s = self.shards.get(sid).ok_or(StoreError::NoSuchShard(sid))?;
        let mut reps = Self::lock(s);
        let source = reps
            .iter()
            .enumerate()
            .filter(|(i, r)| *i != replica && r.up)
            .max_by_key(|(_, r)| r.data.values().flat_map(|c| c.values()).map(|d| d.version).max())
            .map(|(_, r)| r.data.clone());
        if let Some(r) = reps.get_mut(replica) {
            if let Some(data) = source {
                r.data = data;
            }
            r.up = true;
        }
        Ok(())
    }

    pub fn replicas(&self, sid: usize) -> Vec<Replica> {
        self.shards.get(sid).map_or_else(Vec::new, |s| Self::lock(s).clone())
    }

    /// Whole-shard outage, independent of replica state.
    pub fn set_available(&self, sid: usize, available: bool) {
        if let Some(s) = self.shards.get(sid) {
            s.available.store(available, Ordering::SeqCst);
        }
    }

    /// Writes `<collection>.<shard>.jsonl` files, one document per line in
    /// key order, from the newest live replica of each shard.
    pub fn snapshot(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>, StoreError> {
        let io = |e: std::io::Error| StoreError::Snapshot(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();
        for (sid, s) in self.shards.iter().enumerate() {
            let reps = Self::lock(s);
            let Some(best) = reps
                .iter()
                .filter(|r| r.up)
                .max_by_key(|r| r.data.values().flat_map(|c| c.values()).map(|d| d.version).max())
            else {
                continue;
            };
            for (coll, docs) in &best.data {
                let path = dir.join(format!("{coll}.{sid}.jsonl"));
                let mut w = BufWriter::new(File::create(&path).map_err(io)?);
                for d in docs.values() {
                    let line = serde_json::to_string(d).map_err(|e| StoreError::Snapshot(e.to_string()))?;
                    writeln!(w, "{line}").map_err(io)?;
                }
                w.flush().map_err(io)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// Rebuilds a store from snapshot files written with the same router.
    pub fn load(router: ShardRouter, dir: &Path) -> Result<Self, StoreError> {
        let store = Self::new(router);
        let io = |e: std::io::Error| StoreError::Snapshot(e.to_string());
        let mut max_version = 0;
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(stem) = name.strip_suffix(".jsonl") else { continue };
            let Some((coll, sid)) = stem.rsplit_once('.') else { continue };
            let sid: usize = sid.parse().map_err(|_| StoreError::Snapshot(format!("bad shard in {name}")))?;
            let shard = store.shards.get(sid).ok_or(StoreError::NoSuchShard(sid))?;
            let mut reps = Self::lock(shard);
            for line in BufReader::new(File::open(&path).map_err(io)?).lines() {
                let d: StoredDoc =
                    serde_json::from_str(&line.map_err(io)?).map_err(|e| StoreError::Snapshot(e.to_string()))?;
                max_version = max_version.max(d.version);
                for r in reps.iter_mut() {
                    r.data.entry(coll.to_string()).or_default().insert(d.key.clone(), d.clone());
                }
            }
        }
        store.version.store(max_version, Ordering::SeqCst);
        Ok(store)
    }
}
