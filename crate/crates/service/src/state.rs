use std::sync::{Arc, RwLock};
use std::time::Duration;

use sitegrounder_core::conversation::LlmClient;
use sitegrounder_core::crawler::{HttpFetcher, PageFetcher};
use sitegrounder_core::embedding::Embedder;
use sitegrounder_core::vector_index::VectorIndex;

use crate::config::ServiceConfig;
use crate::jobs::JobRegistry;
use crate::sessions::SessionStore;
use crate::ServiceError;

/// Everything a request handler can reach.
pub struct AppState {
    pub config: ServiceConfig,
    pub embedder: Arc<dyn Embedder>,
    pub llm: Arc<dyn LlmClient>,
    pub fetcher: Arc<dyn PageFetcher>,
    pub sessions: SessionStore,
    pub jobs: JobRegistry,
    index: RwLock<Arc<VectorIndex>>,
}

impl AppState {
    /// Builds backends from the configured profiles, fetches over HTTP, and
    /// loads the index from `index_path` when that file exists.
    pub fn from_config(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let embedder = config
            .embedder
            .build()
            .map_err(|e| ServiceError::Backend(e.to_string()))?;
        let llm = config
            .llm
            .build()
            .map_err(|e| ServiceError::Backend(e.to_string()))?;
        let fetcher = HttpFetcher::new(
            sitegrounder_core::crawler::DEFAULT_USER_AGENT,
            Duration::from_millis(config.crawl.fetch_timeout_ms),
        )
        .map_err(|e| ServiceError::Backend(e.to_string()))?;
        let index = match &config.index_path {
            Some(path) if path.exists() => VectorIndex::load(path)?,
            _ => VectorIndex::new(embedder.dim()),
        };
        Self::new(config, embedder, llm, Arc::new(fetcher), index)
    }

    pub fn new(
        config: ServiceConfig,
        embedder: Arc<dyn Embedder>,
        llm: Arc<dyn LlmClient>,
        fetcher: Arc<dyn PageFetcher>,
        index: VectorIndex,
    ) -> Result<Self, ServiceError> {
        if index.dim() != embedder.dim() {
            return Err(ServiceError::Config(format!(
                "index dimension {} does not match embedder dimension {}",
                index.dim(),
                embedder.dim()
            )));
        }
        Ok(Self {
            sessions: SessionStore::new(config.ttl()),
            jobs: JobRegistry::new(),
            config,
            embedder,
            llm,
            fetcher,
            index: RwLock::new(Arc::new(index)),
        })
    }

    pub fn with_session_ttl(mut self, ttl: Duration) -> Self {
        self.sessions = SessionStore::new(ttl);
        self
    }

    /// The index queries should use right now. Callers keep their snapshot
    /// for the whole turn even if an ingest swaps in a new one meanwhile.
    pub fn index(&self) -> Arc<VectorIndex> {
        self.index.read().unwrap().clone()
    }

    pub fn swap_index(&self, index: impl Into<Arc<VectorIndex>>) {
        *self.index.write().unwrap() = index.into();
    }
}
