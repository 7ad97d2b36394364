//! Site-grounded retrieval chatbot engine.
//!
//! The pipeline runs [`crawler`] → [`chunker`] → [`embedding`] →
//! [`vector_index`], and [`conversation`] answers questions over the
//! resulting index. [`evalharness`] runs question sets across model
//! profiles.

pub mod chunker;
pub mod conversation;
pub mod crawler;
pub mod embedding;
pub mod evalharness;
pub mod jsonl;
pub mod pipeline;
pub mod vector_index;

pub use chunker::{chunk_document, Chunk, ChunkingConfig};
pub use conversation::{
    answer_turn, condense_question, ChatSession, ChatTurnResult, LlmClient, ModelProfile,
};
pub use crawler::{crawl, Corpus, CrawlConfig, Document, PageFetcher};
pub use embedding::{stub_embed, Embedder, EmbedderProfile, EmbeddingVector};
pub use evalharness::{containment_score, run_eval, EvalQuestion, EvalRecord, EvalReport};
pub use vector_index::{SearchHit, VectorIndex};
