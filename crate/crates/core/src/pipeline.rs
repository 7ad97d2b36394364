//! Corpus → chunks → vectors → index, shared by the CLI and the service.

use crate::chunker::{chunk_document, Chunk, ChunkingConfig};
use crate::crawler::Document;
use crate::embedding::{EmbedError, Embedder, EmbeddingVector};
use crate::vector_index::{ChunkMetadata, IndexError, VectorIndex};

pub const EMBED_BATCH: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub fn chunk_corpus(documents: &[Document], cfg: &ChunkingConfig) -> Vec<Chunk> {
    documents
        .iter()
        .flat_map(|d| chunk_document(d, cfg))
        .collect()
}

pub async fn embed_chunks(
    chunks: &[Chunk],
    embedder: &dyn Embedder,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut vectors = Vec::with_capacity(chunks.len());
    for batch in chunks.chunks(EMBED_BATCH) {
        let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
        let out = embedder.embed_batch(&texts).await?;
        if out.len() != texts.len() {
            return Err(EmbedError::MalformedResponse(format!(
                "{} vectors for {} inputs",
                out.len(),
                texts.len()
            )));
        }
        vectors.extend(out);
    }
    Ok(vectors)
}

pub fn index_chunks(
    chunks: &[Chunk],
    vectors: &[EmbeddingVector],
    dim: usize,
) -> Result<VectorIndex, IndexError> {
    let mut index = VectorIndex::new(dim);
    for (chunk, vector) in chunks.iter().zip(vectors) {
        index.add(
            chunk.chunk_id.clone(),
            vector,
            ChunkMetadata {
                source_url: chunk.source_url.clone(),
                text: chunk.text.clone(),
            },
        )?;
    }
    Ok(index)
}

pub async fn build_index(
    documents: &[Document],
    cfg: &ChunkingConfig,
    embedder: &dyn Embedder,
) -> Result<VectorIndex, PipelineError> {
    let chunks = chunk_corpus(documents, cfg);
    let vectors = embed_chunks(&chunks, embedder).await?;
    Ok(index_chunks(&chunks, &vectors, embedder.dim())?)
}
