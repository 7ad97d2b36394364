use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use chrono::Utc;
use url::Url;

use super::Page;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
}

/// Source of pages for the crawler. Live HTTP in production, an in-memory
/// map in tests.
#[async_trait]
pub trait PageFetcher: Send + Sync {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError>;
}

/// Fetches over HTTP(S) with reqwest.
pub struct HttpFetcher {
    client: reqwest::Client,
}

impl HttpFetcher {
    pub fn new(user_agent: &str, timeout: Duration) -> Result<Self, FetchError> {
        let client = reqwest::Client::builder()
            .user_agent(user_agent)
            .timeout(timeout)
            .redirect(reqwest::redirect::Policy::limited(5))
            .build()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        Ok(Self { client })
    }
}

#[async_trait]
impl PageFetcher for HttpFetcher {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        let resp = self
            .client
            .get(url.clone())
            .send()
            .await
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        let body = if status.is_success() {
            let bytes = resp
                .bytes()
                .await
                .map_err(|e| FetchError::Transport(e.to_string()))?;
            Some(bytes.to_vec())
        } else {
            None
        };
        Ok(Page {
            url: url.clone(),
            status: status.as_u16(),
            content_type,
            body,
            fetched_at: Utc::now(),
        })
    }
}

#[derive(Debug, Clone)]
struct StoredResource {
    content_type: String,
    body: Vec<u8>,
}

/// In-memory site keyed by URL. Unknown URLs answer 404.
#[derive(Debug, Clone, Default)]
pub struct MemoryFetcher {
    resources: HashMap<String, StoredResource>,
}

impl MemoryFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, url: &str, content_type: &str, body: impl Into<Vec<u8>>) {
        let key = Url::parse(url)
            .map(String::from)
            .unwrap_or_else(|_| url.to_string());
        self.resources.insert(
            key,
            StoredResource {
                content_type: content_type.to_string(),
                body: body.into(),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    /// Loads every file under `dir` as if served from `origin`.
    /// `index.html` files are also reachable through their directory URL.
    pub fn from_directory(origin: &Url, dir: &Path) -> std::io::Result<Self> {
        let mut fetcher = Self::new();
        let mut pending = vec![dir.to_path_buf()];
        while let Some(current) = pending.pop() {
            for entry in std::fs::read_dir(&current)? {
                let path = entry?.path();
                if path.is_dir() {
                    pending.push(path);
                    continue;
                }
                let rel = path
                    .strip_prefix(dir)
                    .expect("walked path is under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                let body = std::fs::read(&path)?;
                let content_type = content_type_for(&rel);
                let Ok(url) = origin.join(&rel) else { continue };
                fetcher.insert(url.as_str(), content_type, body.clone());
                if let Some(dir_path) = rel.strip_suffix("index.html") {
                    if let Ok(dir_url) = origin.join(dir_path) {
                        fetcher.insert(dir_url.as_str(), content_type, body);
                    }
                }
            }
        }
        Ok(fetcher)
    }
}

fn content_type_for(path: &str) -> &'static str {
    let ext = path.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("html") | Some("htm") => "text/html; charset=utf-8",
        Some("txt") => "text/plain",
        Some("pdf") => "application/pdf",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

#[async_trait]
impl PageFetcher for MemoryFetcher {
    async fn fetch(&self, url: &Url) -> Result<Page, FetchError> {
        let page = match self.resources.get(url.as_str()) {
            Some(res) => Page {
                url: url.clone(),
                status: 200,
                content_type: res.content_type.clone(),
                body: Some(res.body.clone()),
                fetched_at: Utc::now(),
            },
            None => Page {
                url: url.clone(),
                status: 404,
                content_type: "text/html".into(),
                body: None,
                fetched_at: Utc::now(),
            },
        };
        Ok(page)
    }
}
