#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use sitegrounder_core::chunker::ChunkingConfig;
use sitegrounder_core::crawler::{crawl, CrawlConfig, Document, MemoryFetcher};
use sitegrounder_core::embedding::StubEmbedder;
use sitegrounder_core::pipeline::build_index;
use sitegrounder_core::vector_index::VectorIndex;
use url::Url;

pub const ORIGIN: &str = "https://fixture.sitegrounder.test/";

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub async fn fixture_documents() -> Vec<Document> {
    let fetcher =
        MemoryFetcher::from_directory(&Url::parse(ORIGIN).unwrap(), &fixture_dir("site")).unwrap();
    let mut cfg = CrawlConfig::new(ORIGIN).unwrap();
    cfg.politeness_delay = Duration::ZERO;
    crawl(&cfg, &fetcher).await.unwrap().documents
}

pub async fn fixture_index() -> (VectorIndex, StubEmbedder) {
    let embedder = StubEmbedder::new(64).unwrap();
    let docs = fixture_documents().await;
    let index = build_index(&docs, &ChunkingConfig::default(), &embedder)
        .await
        .unwrap();
    (index, embedder)
}
