//! Live process instances, held in memory.
//!
//! Each instance sits behind its own mutex, so requests on one instance run
//! one at a time while different instances proceed in parallel. Instances
//! idle for longer than the TTL are dropped, and nothing survives a restart.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sbpm_core::engine::ProcessInstance;
use tokio::sync::{Mutex, RwLock};

pub struct Entry {
    pub model_id: String,
    pub instance: ProcessInstance,
    touched: Instant,
}

impl Entry {
    pub fn touch(&mut self) {
        self.touched = Instant::now();
    }
}

pub struct Instances {
    map: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    next: AtomicU64,
    ttl: Duration,
}

impl Instances {
    pub fn new(ttl: Duration) -> Self {
        Instances {
            map: RwLock::new(HashMap::new()),
            next: AtomicU64::new(1),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub async fn insert(&self, model_id: String, instance: ProcessInstance) -> String {
        let id = format!("inst-{}", self.next.fetch_add(1, Ordering::Relaxed));
        let entry = Entry {
            model_id,
            instance,
            touched: Instant::now(),
        };
        self.map.write().await.insert(id.clone(), Arc::new(Mutex::new(entry)));
        id
    }

    pub async fn get(&self, id: &str) -> Option<Arc<Mutex<Entry>>> {
        self.map.read().await.get(id).cloned()
    }

    pub async fn remove(&self, id: &str) -> bool {
        self.map.write().await.remove(id).is_some()
    }

    /// Drops idle instances. One currently locked by a request is in use
    /// and stays.
    pub async fn reap(&self) -> usize {
        let now = Instant::now();
        let mut map = self.map.write().await;
        let before = map.len();
        map.retain(|_, e| match e.try_lock() {
            Ok(e) => now.duration_since(e.touched) < self.ttl,
            Err(_) => true,
        });
        before - map.len()
    }

    pub async fn len(&self) -> usize {
        self.map.read().await.len()
    }

    pub async fn is_empty(&self) -> bool {
        self.map.read().await.is_empty()
    }
}
