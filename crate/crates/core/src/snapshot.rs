use std::sync::{Arc, RwLock};

/// Holds the active version of an immutable model.
///
/// Readers clone the inner `Arc` and keep using it for as long as they need,
/// so a swap never disturbs work already in flight on the previous version.
#[derive(Debug)]
pub struct SnapshotCell<T> {
    current: RwLock<Arc<T>>,
    version: std::sync::atomic::AtomicU64,
}

impl<T> SnapshotCell<T> {
    pub fn new(value: T) -> Self {
        Self {
            current: RwLock::new(Arc::new(value)),
            version: std::sync::atomic::AtomicU64::new(1),
        }
    }

    pub fn load(&self) -> Arc<T> {
        self.current.read().unwrap().clone()
    }

    /// Installs `value` and returns the snapshot it replaced.
    pub fn swap(&self, value: T) -> Arc<T> {
        let next = Arc::new(value);
        let mut slot = self.current.write().unwrap();
        self.version
            .fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        std::mem::replace(&mut *slot, next)
    }

    pub fn version(&self) -> u64 {
        self.version.load(std::sync::atomic::Ordering::SeqCst)
    }
}
