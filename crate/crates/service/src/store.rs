use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};

use elicit_core::datasets::{UserHistory, UserId, HISTORY_LEN};
use elicit_core::dialogue::{DialogueState, Engine, Plan, PolicyConfig};
use elicit_core::model::ModelSnapshot;
use elicit_core::rng::derive_seed;
use elicit_core::simulation::Strategy;

use crate::error::ApiError;

/// A frozen snapshot plus the histories that personalize its sessions.
#[derive(Debug)]
pub struct Model {
    pub snapshot: ModelSnapshot,
    /// Indexed by user id; may be empty, in which case known users start
    /// with an empty history.
    pub histories: Vec<UserHistory>,
}

impl Model {
    pub fn new(snapshot: ModelSnapshot, histories: Vec<UserHistory>) -> Self {
        Self { snapshot, histories }
    }

    pub fn history(&self, user: Option<UserId>) -> UserHistory {
        let items = user
            .and_then(|u| self.histories.get(u.index()))
            .map(|h| h.items.iter().copied().take(HISTORY_LEN).collect())
            .unwrap_or_default();
        UserHistory { user, items }
    }

    pub fn engine(&self, policy: PolicyConfig, strategy: Strategy) -> Engine<'_> {
        Engine {
            catalog: &self.snapshot.catalog,
            belief: &self.snapshot,
            scorer: &self.snapshot,
            policy,
            strategy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceConfig {
    pub policy: PolicyConfig,
    pub strategy: Strategy,
    /// Base for session seeds that clients do not pin.
    pub seed: u64,
    pub idle_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::default(),
            strategy: Strategy::Minicorn,
            seed: 123,
            idle_timeout: Duration::from_secs(30 * 60),
        }
    }
}

/// One conversation. A session keeps the model it was created with, so a
/// reload never changes a conversation midway.
pub struct Session {
    pub id: String,
    pub model: Arc<Model>,
    pub state: DialogueState,
    pub seed: u64,
    /// The action handed out and not yet answered.
    pub outstanding: Option<Plan>,
    pub created_at: Instant,
    pub last_seen: Instant,
}

struct Shared {
    config: ServiceConfig,
    model: RwLock<Option<Arc<Model>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    created: AtomicU64,
}

/// Cheap to clone; every clone sees the same sessions and model.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    pub fn new(config: ServiceConfig, model: Option<Model>) -> Self {
        Self {
            shared: Arc::new(Shared {
                config,
                model: RwLock::new(model.map(Arc::new)),
                sessions: Mutex::new(HashMap::new()),
                created: AtomicU64::new(0),
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.shared.config
    }

    pub fn model(&self) -> Option<Arc<Model>> {
        self.shared.model.read().clone()
    }

    /// Replaces the model for sessions created from now on.
    pub fn swap_model(&self, model: Model) {
        *self.shared.model.write() = Some(Arc::new(model));
    }

    pub fn session_count(&self) -> usize {
        self.shared.sessions.lock().len()
    }

    pub(crate) fn next_seed(&self) -> u64 {
        let n = self.shared.created.fetch_add(1, Ordering::Relaxed);
        derive_seed(self.shared.config.seed, &[n])
    }

    pub(crate) fn insert(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.id.clone();
        let entry = Arc::new(Mutex::new(session));
        self.shared.sessions.lock().insert(id, entry.clone());
        entry
    }

    /// Looks a session up and marks it as used. Sessions idle for longer
    /// than the timeout are dropped on sight.
    pub(crate) fn session(&self, id: &str, now: Instant) -> Result<Arc<Mutex<Session>>, ApiError> {
        let entry = self
            .shared
            .sessions
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))?;
        let expired = {
            let mut s = entry.lock();
            let expired = now.saturating_duration_since(s.last_seen) > self.shared.config.idle_timeout;
            if !expired {
                s.last_seen = s.last_seen.max(now);
            }
            expired
        };
        if expired {
            self.shared.sessions.lock().remove(id);
            return Err(ApiError::session_not_found(id));
        }
        Ok(entry)
    }

    /// Drops every session idle for longer than the timeout; returns how
    /// many were removed.
    pub fn sweep(&self, now: Instant) -> usize {
        let timeout = self.shared.config.idle_timeout;
        let mut sessions = self.shared.sessions.lock();
        let before = sessions.len();
        sessions.retain(|_, s| {
            // A session busy in a request is in use, not idle.
            s.try_lock().is_none_or(|s| now.saturating_duration_since(s.last_seen) <= timeout)
        });
        before - sessions.len()
    }
}
