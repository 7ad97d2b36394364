//! In-memory chat sessions with a sliding idle timeout.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use sitegrounder_core::conversation::{ChatSession, DEFAULT_MAX_HISTORY_TURNS};

pub type SharedSession = Arc<tokio::sync::Mutex<ChatSession>>;

#[derive(Debug)]
pub enum Lookup {
    Live(SharedSession),
    Expired,
    Unknown,
}

struct Entry {
    session: SharedSession,
    last_seen: Instant,
}

#[derive(Default)]
struct Inner {
    live: HashMap<String, Entry>,
    expired: HashSet<String>,
}

pub struct SessionStore {
    ttl: Duration,
    max_history_turns: usize,
    inner: Mutex<Inner>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            max_history_turns: DEFAULT_MAX_HISTORY_TURNS,
            inner: Mutex::default(),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn create(&self, model_profile_id: &str) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        let session = ChatSession::new(id.clone(), model_profile_id)
            .with_max_history_turns(self.max_history_turns);
        let mut inner = self.inner.lock().unwrap();
        inner.live.insert(
            id.clone(),
            Entry {
                session: Arc::new(tokio::sync::Mutex::new(session)),
                last_seen: Instant::now(),
            },
        );
        id
    }

    /// Looks a session up and refreshes its idle timer.
    pub fn get(&self, session_id: &str) -> Lookup {
        let now = Instant::now();
        let mut inner = self.inner.lock().unwrap();
        let Some(entry) = inner.live.get_mut(session_id) else {
            return if inner.expired.contains(session_id) {
                Lookup::Expired
            } else {
                Lookup::Unknown
            };
        };
        if now.duration_since(entry.last_seen) > self.ttl {
            inner.live.remove(session_id);
            inner.expired.insert(session_id.to_string());
            return Lookup::Expired;
        }
        entry.last_seen = now;
        Lookup::Live(entry.session.clone())
    }

    /// Drops idle sessions; returns how many were removed.
    pub fn sweep(&self) -> usize {
        let now = Instant::now();
        let mut inner = self.inner.lock().unwrap();
        let stale: Vec<String> = inner
            .live
            .iter()
            .filter(|(_, e)| now.duration_since(e.last_seen) > self.ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &stale {
            inner.live.remove(id);
            inner.expired.insert(id.clone());
        }
        stale.len()
    }

    pub fn live_count(&self) -> usize {
        self.inner.lock().unwrap().live.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_live_and_expired() {
        let store = SessionStore::new(Duration::from_millis(30));
        assert!(matches!(store.get("nope"), Lookup::Unknown));
        let id = store.create("stub");
        assert!(matches!(store.get(&id), Lookup::Live(_)));
        std::thread::sleep(Duration::from_millis(60));
        assert!(matches!(store.get(&id), Lookup::Expired));
        assert!(matches!(store.get(&id), Lookup::Expired));
        assert_eq!(store.live_count(), 0);
    }

    #[test]
    fn access_refreshes_the_timer() {
        let store = SessionStore::new(Duration::from_millis(80));
        let id = store.create("stub");
        for _ in 0..4 {
            std::thread::sleep(Duration::from_millis(30));
            assert!(matches!(store.get(&id), Lookup::Live(_)));
        }
    }

    #[test]
    fn sweep_moves_idle_sessions_to_expired() {
        let store = SessionStore::new(Duration::from_millis(20));
        let a = store.create("stub");
        let b = store.create("stub");
        assert_ne!(a, b);
        std::thread::sleep(Duration::from_millis(40));
        assert_eq!(store.sweep(), 2);
        assert!(matches!(store.get(&a), Lookup::Expired));
    }
}
