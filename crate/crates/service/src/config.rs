//! Service configuration, read from a TOML file with environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sitegrounder_core::chunker::ChunkingConfig;
use sitegrounder_core::conversation::{ModelProfile, DEFAULT_K};
use sitegrounder_core::embedding::EmbedderProfile;

use crate::ServiceError;

pub const PORT_ENV: &str = "SITEGROUNDER_PORT";
pub const INDEX_PATH_ENV: &str = "SITEGROUNDER_INDEX_PATH";
pub const CORS_ORIGINS_ENV: &str = "SITEGROUNDER_CORS_ORIGINS";

/// What a message does when another turn on the same session is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusyPolicy {
    #[default]
    Wait,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlDefaults {
    pub max_pages: usize,
    pub max_depth: usize,
    pub politeness_delay_ms: u64,
    pub fetch_timeout_ms: u64,
    pub workers: usize,
}

impl Default for CrawlDefaults {
    fn default() -> Self {
        Self {
            max_pages: 500,
            max_depth: 5,
            politeness_delay_ms: 250,
            fetch_timeout_ms: 10_000,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkDefaults {
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkDefaults {
    fn default() -> Self {
        let d = ChunkingConfig::default();
        Self {
            max_chunk_chars: d.max_chunk_chars(),
            overlap_chars: d.overlap_chars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    /// Where the index is loaded from at startup and saved to after ingest.
    /// Without one, ingested indexes live only in memory.
    pub index_path: Option<PathBuf>,
    pub cors_origins: Vec<String>,
    pub k: usize,
    pub ttl_seconds: u64,
    pub busy_policy: BusyPolicy,
    pub embedder: EmbedderProfile,
    pub llm: ModelProfile,
    pub crawl: CrawlDefaults,
    pub chunking: ChunkDefaults,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            index_path: None,
            cors_origins: Vec::new(),
            k: DEFAULT_K,
            ttl_seconds: 3600,
            busy_policy: BusyPolicy::Wait,
            embedder: EmbedderProfile::stub(64),
            llm: ModelProfile::stub("stub"),
            crawl: CrawlDefaults::default(),
            chunking: ChunkDefaults::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `SITEGROUNDER_PORT`, `SITEGROUNDER_INDEX_PATH` and
    /// `SITEGROUNDER_CORS_ORIGINS` (comma separated) when set.
    pub fn apply_env(&mut self) -> Result<(), ServiceError> {
        self.apply_overrides(|key| std::env::var(key).ok())
    }

    pub fn apply_overrides(
        &mut self,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ServiceError> {
        if let Some(port) = get(PORT_ENV) {
            self.port = port
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("{PORT_ENV}={port:?} is not a port")))?;
        }
        if let Some(path) = get(INDEX_PATH_ENV) {
            self.index_path = Some(PathBuf::from(path));
        }
        if let Some(origins) = get(CORS_ORIGINS_ENV) {
            self.cors_origins = origins
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.k == 0 {
            return Err(ServiceError::Config("k must be at least 1".into()));
        }
        if self.ttl_seconds == 0 {
            return Err(ServiceError::Config(
                "ttl_seconds must be at least 1".into(),
            ));
        }
        self.chunking_config()?;
        Ok(())
    }

    pub fn ttl(&self) -> Duration {
        Duration::from_secs(self.ttl_seconds)
    }

    pub fn chunking_config(&self) -> Result<ChunkingConfig, ServiceError> {
        ChunkingConfig::new(self.chunking.max_chunk_chars, self.chunking.overlap_chars)
            .map_err(|e| ServiceError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sitegrounder_core::embedding::BackendKind;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(
            ServiceConfig::from_toml("").unwrap(),
            ServiceConfig::default()
        );
    }

    #[test]
    fn example_file_matches_defaults() {
        let text = include_str!("../../../docs/sitegrounder.example.toml");
        assert_eq!(
            ServiceConfig::from_toml(text).unwrap(),
            ServiceConfig::default()
        );
    }

    #[test]
    fn full_file_parses() {
        let cfg = ServiceConfig::from_toml(
            r#"
            port = 9000
            index_path = "/var/lib/sitegrounder/site.vidx"
            cors_origins = ["https://www.example.edu"]
            k = 6
            ttl_seconds = 600
            busy_policy = "reject"

            [embedder]
            kind = "remote"
            endpoint_url = "http://embed.internal:8000/embed"
            model_id = "hkunlp/instructor-large"
            dim = 768

            [llm]
            profile_id = "google/flan-t5-xxl"
            kind = "remote"
            model_id = "google/flan-t5-xxl"

            [crawl]
            max_pages = 50

            [chunking]
            max_chunk_chars = 800
            overlap_chars = 100
            "#,
        )
        .unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.k, 6);
        assert_eq!(cfg.busy_policy, BusyPolicy::Reject);
        assert_eq!(cfg.embedder.kind, BackendKind::Remote);
        assert_eq!(cfg.embedder.dim, 768);
        assert_eq!(cfg.llm.max_context_chars, 6000);
        assert_eq!(cfg.crawl.max_pages, 50);
        assert_eq!(cfg.crawl.max_depth, 5);
        assert_eq!(cfg.chunking_config().unwrap().overlap_chars(), 100);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("k = 0").is_err());
        assert!(ServiceConfig::from_toml("ttl_seconds = 0").is_err());
        assert!(
            ServiceConfig::from_toml("[chunking]\nmax_chunk_chars = 10\noverlap_chars = 10")
                .is_err()
        );
        assert!(ServiceConfig::from_toml("prot = 1").is_err());
    }

    #[test]
    fn env_overrides_apply() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_overrides(|k| match k {
            PORT_ENV => Some("7070".into()),
            INDEX_PATH_ENV => Some("/tmp/x.vidx".into()),
            CORS_ORIGINS_ENV => Some("https://a.example, https://b.example,".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.port, 7070);
        assert_eq!(cfg.index_path, Some(PathBuf::from("/tmp/x.vidx")));
        assert_eq!(
            cfg.cors_origins,
            vec!["https://a.example", "https://b.example"]
        );
        assert!(cfg
            .apply_overrides(|k| (k == PORT_ENV).then(|| "http".into()))
            .is_err());
    }
}
