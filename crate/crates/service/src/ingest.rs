use std::sync::Arc;

use sitegrounder_core::crawler::{crawl, CrawlConfig};
use sitegrounder_core::pipeline::{chunk_corpus, embed_chunks, index_chunks};

use crate::jobs::JobState;
use crate::state::AppState;

/// Runs one ingest job in the background. Any failure, including a panic in
/// the pipeline, leaves the job in `failed` and frees the ingest slot.
pub fn spawn_ingest(state: Arc<AppState>, job_id: String, crawl_cfg: CrawlConfig) {
    tokio::spawn(async move {
        let inner = tokio::spawn(run_stages(state.clone(), job_id.clone(), crawl_cfg));
        let outcome = match inner.await {
            Ok(result) => result,
            Err(e) => Err(format!("ingest task aborted: {e}")),
        };
        if let Err(message) = outcome {
            tracing::warn!(job_id, %message, "ingest failed");
            let _ = state.jobs.fail(&job_id, message);
        }
    });
}

async fn run_stages(
    state: Arc<AppState>,
    job_id: String,
    crawl_cfg: CrawlConfig,
) -> Result<(), String> {
    let step = |next: JobState, update: &dyn Fn(&mut crate::jobs::IngestJob)| {
        state
            .jobs
            .transition(&job_id, next, |j| update(j))
            .map_err(|e| e.to_string())
    };

    step(JobState::Crawling, &|_| {})?;
    let corpus = crawl(&crawl_cfg, state.fetcher.as_ref())
        .await
        .map_err(|e| e.to_string())?;
    let pages = corpus.documents.len();
    tracing::info!(
        job_id,
        pages,
        skipped = corpus.skipped.len(),
        "crawl finished"
    );

    step(JobState::Embedding, &|j| j.pages_fetched = pages)?;
    let chunking = state.config.chunking_config().map_err(|e| e.to_string())?;
    let chunks = chunk_corpus(&corpus.documents, &chunking);
    let vectors = embed_chunks(&chunks, state.embedder.as_ref())
        .await
        .map_err(|e| e.to_string())?;

    step(JobState::Indexing, &|_| {})?;
    let index =
        Arc::new(index_chunks(&chunks, &vectors, state.embedder.dim()).map_err(|e| e.to_string())?);
    let count = index.len();
    if let Some(path) = state.config.index_path.clone() {
        let index = index.clone();
        tokio::task::spawn_blocking(move || index.save(&path))
            .await
            .map_err(|e| e.to_string())?
            .map_err(|e| e.to_string())?;
    }
    state.swap_index(index);
    step(JobState::Done, &|j| j.chunks_indexed = count)?;
    tracing::info!(job_id, chunks = count, "index swapped in");
    Ok(())
}
