//! Bounded same-host crawling and HTML-to-text extraction.
//!
//! Traversal is breadth-first from the seed. Pages are fetched in batches of
//! up to `workers` concurrent requests; results are processed in frontier
//! order, so the corpus is identical to a sequential BFS regardless of how
//! many workers run.

mod extract;
mod fetch;
mod robots;
mod url_norm;

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::time::Instant;
use url::Url;

pub use extract::{extract_document, extract_document_with, is_html_content_type, ExtractError};
pub use fetch::{FetchError, HttpFetcher, MemoryFetcher, PageFetcher};
pub use robots::RobotsRules;
pub use url_norm::{
    normalize_url, normalize_url_with, parse_seed, same_host, NormalizeOptions, Rejection,
};

use crate::jsonl;

pub const DEFAULT_USER_AGENT: &str = concat!("sitegrounder/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub seed_url: Url,
    pub max_pages: usize,
    pub max_depth: usize,
    /// Minimum spacing between two requests to the same host.
    pub politeness_delay: Duration,
    pub fetch_timeout: Duration,
    pub user_agent: String,
    pub workers: usize,
    pub keep_query: bool,
    pub respect_robots: bool,
}

impl CrawlConfig {
    pub fn new(seed: &str) -> Result<Self, CrawlError> {
        let seed_url =
            parse_seed(seed).map_err(|r| CrawlError::InvalidConfig(format!("seed_url: {r}")))?;
        Ok(Self {
            seed_url,
            max_pages: 500,
            max_depth: 5,
            politeness_delay: Duration::from_millis(250),
            fetch_timeout: Duration::from_millis(10_000),
            user_agent: DEFAULT_USER_AGENT.to_string(),
            workers: 4,
            keep_query: false,
            respect_robots: true,
        })
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.max_pages == 0 {
            return Err(CrawlError::InvalidConfig(
                "max_pages must be at least 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(CrawlError::InvalidConfig(
                "workers must be at least 1".into(),
            ));
        }
        parse_seed(self.seed_url.as_str())
            .map_err(|r| CrawlError::InvalidConfig(format!("seed_url: {r}")))?;
        Ok(())
    }

    fn normalize_options(&self) -> NormalizeOptions {
        NormalizeOptions {
            keep_query: self.keep_query,
        }
    }
}

/// A fetched resource. `body` is present iff the status is 2xx.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub url: Url,
    pub status: u16,
    pub content_type: String,
    pub body: Option<Vec<u8>>,
    pub fetched_at: DateTime<Utc>,
}

impl Page {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// One crawled page flattened to text blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub url: Url,
    pub title: String,
    pub blocks: Vec<String>,
    pub links: Vec<Url>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPage {
    pub url: Url,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub seed_url: Url,
    pub crawl_started_at: DateTime<Utc>,
    pub documents: Vec<Document>,
    /// Pages that were discovered but produced no document.
    #[serde(default)]
    pub skipped: Vec<SkippedPage>,
}

impl Corpus {
    /// Writes the documents as JSON Lines, one object per line.
    pub fn write_jsonl<W: Write>(&self, out: W) -> std::io::Result<()> {
        jsonl::write_lines(out, &self.documents)
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Document>, jsonl::JsonlError> {
        jsonl::read_lines(input)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CrawlError {
    #[error("invalid crawl config: {0}")]
    InvalidConfig(String),
    #[error("seed {url} unreachable: {reason}")]
    SeedUnreachable { url: Url, reason: String },
}

/// Enforces a minimum gap between requests to one host across all workers.
struct HostThrottle {
    delay: Duration,
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl HostThrottle {
    fn new(delay: Duration) -> Self {
        Self {
            delay,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    async fn wait(&self, url: &Url) {
        if self.delay.is_zero() {
            return;
        }
        let host = url.host_str().unwrap_or_default().to_string();
        let slot = {
            let mut slots = self.next_slot.lock().await;
            let now = Instant::now();
            let slot = slots
                .get(&host)
                .copied()
                .filter(|s| *s > now)
                .unwrap_or(now);
            slots.insert(host, slot + self.delay);
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

async fn fetch_page(
    fetcher: &dyn PageFetcher,
    throttle: &HostThrottle,
    timeout: Duration,
    url: &Url,
) -> Result<Page, FetchError> {
    throttle.wait(url).await;
    match tokio::time::timeout(timeout, fetcher.fetch(url)).await {
        Ok(res) => res,
        Err(_) => Err(FetchError::Timeout(timeout)),
    }
}

async fn load_robots(
    config: &CrawlConfig,
    fetcher: &dyn PageFetcher,
    throttle: &HostThrottle,
) -> RobotsRules {
    if !config.respect_robots {
        return RobotsRules::allow_all();
    }
    let Ok(robots_url) = config.seed_url.join("/robots.txt") else {
        return RobotsRules::allow_all();
    };
    match fetch_page(fetcher, throttle, config.fetch_timeout, &robots_url).await {
        Ok(page) if page.is_success() => {
            let body = page.body.unwrap_or_default();
            RobotsRules::parse(&String::from_utf8_lossy(&body), &config.user_agent)
        }
        _ => RobotsRules::allow_all(),
    }
}

/// Breadth-first crawl from `config.seed_url`.
///
/// Only a failure to fetch the seed is fatal; every other failure lands in
/// [`Corpus::skipped`].
pub async fn crawl(config: &CrawlConfig, fetcher: &dyn PageFetcher) -> Result<Corpus, CrawlError> {
    config.validate()?;
    let crawl_started_at = Utc::now();
    let throttle = HostThrottle::new(config.politeness_delay);
    let robots = load_robots(config, fetcher, &throttle).await;
    let opts = config.normalize_options();

    let seed = config.seed_url.clone();
    let mut visited: HashSet<Url> = HashSet::from([seed.clone()]);
    let mut frontier: VecDeque<(Url, usize)> = VecDeque::from([(seed.clone(), 0)]);
    let mut documents = Vec::new();
    let mut skipped = Vec::new();

    while !frontier.is_empty() && documents.len() < config.max_pages {
        let budget = config.workers.min(config.max_pages - documents.len());
        let batch: Vec<(Url, usize)> = frontier.drain(..budget.min(frontier.len())).collect();
        let results = futures::future::join_all(
            batch
                .iter()
                .map(|(url, _)| fetch_page(fetcher, &throttle, config.fetch_timeout, url)),
        )
        .await;

        for ((url, depth), result) in batch.into_iter().zip(results) {
            let outcome = match result {
                Ok(page) if page.is_success() => {
                    extract_document_with(&page, opts).map_err(|e| e.to_string())
                }
                Ok(page) => Err(format!("HTTP status {}", page.status)),
                Err(e) => Err(e.to_string()),
            };
            let doc = match outcome {
                Ok(doc) => doc,
                Err(reason) if url == seed => {
                    return Err(CrawlError::SeedUnreachable { url, reason });
                }
                Err(reason) => {
                    tracing::debug!(%url, %reason, "skipping page");
                    skipped.push(SkippedPage { url, reason });
                    continue;
                }
            };
            if depth < config.max_depth {
                for link in &doc.links {
                    if !same_host(link, &seed) || visited.contains(link) {
                        continue;
                    }
                    visited.insert(link.clone());
                    if robots.is_allowed(link.path()) {
                        frontier.push_back((link.clone(), depth + 1));
                    } else {
                        skipped.push(SkippedPage {
                            url: link.clone(),
                            reason: "disallowed by robots.txt".into(),
                        });
                    }
                }
            }
            documents.push(doc);
        }
    }

    Ok(Corpus {
        seed_url: seed,
        crawl_started_at,
        documents,
        skipped,
    })
}
