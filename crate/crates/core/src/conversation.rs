//! Conversational retrieval chain.
//!
//! Each turn condenses the follow-up against the chat history, retrieves the
//! top-k chunks for the condensed question, asks the language model to answer
//! from those chunks, and appends the exchange to the session history.

use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::embedding::{tokenize, BackendKind, EmbedError, Embedder};
use crate::vector_index::{IndexError, SearchHit, VectorIndex};

pub const LLM_URL_ENV: &str = "SITEGROUNDER_LLM_URL";
pub const FALLBACK_ANSWER: &str = "I could not find relevant information.";
pub const CONTEXT_SEPARATOR: &str = "\n---\n";

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_MAX_HISTORY_TURNS: usize = 10;
pub const DEFAULT_MAX_CONTEXT_CHARS: usize = 6000;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 256;

const CONDENSE_TEMPLATE: &str = "Given the following conversation and a follow up question, rephrase the follow up question to be a standalone question.\n\nChat History:\n{history}\nFollow Up Input: {question}\nStandalone question:";
const ANSWER_TEMPLATE: &str = "Use the following pieces of context to answer the question at the end. If you don't know the answer, say you don't know.\n\n{context}\n\nQuestion: {question}\nHelpful Answer:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub at: DateTime<Utc>,
}

/// Chat memory. Messages alternate user/assistant, starting with user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    history: Vec<ChatMessage>,
    pub created_at: DateTime<Utc>,
    pub model_profile_id: String,
    max_history_turns: usize,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, model_profile_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            history: Vec::new(),
            created_at: Utc::now(),
            model_profile_id: model_profile_id.into(),
            max_history_turns: DEFAULT_MAX_HISTORY_TURNS,
        }
    }

    pub fn with_max_history_turns(mut self, turns: usize) -> Self {
        self.max_history_turns = turns;
        self.trim();
        self
    }

    pub fn history(&self) -> &[ChatMessage] {
        &self.history
    }

    pub fn max_history_turns(&self) -> usize {
        self.max_history_turns
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }

    /// Appends one user/assistant exchange, dropping the oldest turns beyond
    /// the limit.
    pub fn push_turn(&mut self, question: impl Into<String>, answer: impl Into<String>) {
        let at = Utc::now();
        self.history.push(ChatMessage {
            role: Role::User,
            text: question.into(),
            at,
        });
        self.history.push(ChatMessage {
            role: Role::Assistant,
            text: answer.into(),
            at,
        });
        self.trim();
    }

    fn trim(&mut self) {
        let cap = self.max_history_turns * 2;
        if self.history.len() > cap {
            let excess = self.history.len() - cap;
            self.history.drain(..excess);
        }
    }
}

pub fn last_user_message(history: &[ChatMessage]) -> Option<&str> {
    history
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.text.as_str())
}

pub fn render_history(history: &[ChatMessage]) -> String {
    history
        .iter()
        .map(|m| match m.role {
            Role::User => format!("Human: {}", m.text),
            Role::Assistant => format!("Assistant: {}", m.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_condense_prompt(history: &[ChatMessage], question: &str) -> String {
    CONDENSE_TEMPLATE
        .replace("{history}", &render_history(history))
        .replace("{question}", question)
}

pub fn render_answer_prompt(context: &str, question: &str) -> String {
    ANSWER_TEMPLATE
        .replace("{context}", context)
        .replace("{question}", question)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Condense,
    Answer,
}

/// Everything a language model call needs. Remote clients only send
/// `prompt`; the stub reads the structured fields.
#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub kind: PromptKind,
    pub prompt: String,
    pub question: String,
    pub history: Vec<ChatMessage>,
    pub context: String,
    pub max_new_tokens: u32,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("language model unavailable: {0}")]
    Unavailable(String),
    #[error("malformed language model response: {0}")]
    MalformedResponse(String),
    #[error("invalid model profile: {0}")]
    InvalidProfile(String),
}

#[async_trait]
pub trait LlmClient: Send + Sync {
    async fn complete(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

/// Deterministic offline language model.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubLlm;

#[async_trait]
impl LlmClient for StubLlm {
    async fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        Ok(stub_llm(request))
    }
}

pub fn stub_llm(request: &LlmRequest) -> String {
    match request.kind {
        PromptKind::Condense => match last_user_message(&request.history) {
            None => request.question.clone(),
            Some(prev) => format!("{} (in the context of: {})", request.question, prev),
        },
        PromptKind::Answer => best_overlap_sentence(&request.context, &request.question)
            .unwrap_or_else(|| FALLBACK_ANSWER.to_string()),
    }
}

/// Splits at `.`, `?` or `!` followed by whitespace or end of text, and at
/// line breaks. Terminators are dropped, pieces trimmed, and pieces without
/// any token discarded.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    let mut push = |s: &mut String| {
        let trimmed = s.trim();
        if tokenize(trimmed).next().is_some() {
            sentences.push(trimmed.to_string());
        }
        s.clear();
    };
    while let Some(c) = chars.next() {
        let terminal =
            matches!(c, '.' | '?' | '!') && chars.peek().is_none_or(|n| n.is_whitespace());
        if c == '\n' || terminal {
            push(&mut current);
        } else {
            current.push(c);
        }
    }
    push(&mut current);
    sentences
}

fn best_overlap_sentence(context: &str, question: &str) -> Option<String> {
    let q_tokens: std::collections::HashSet<String> = tokenize(question).collect();
    let mut best: Option<(usize, String)> = None;
    for sentence in split_sentences(context) {
        let s_tokens: std::collections::HashSet<String> = tokenize(&sentence).collect();
        let overlap = s_tokens.intersection(&q_tokens).count();
        if best.as_ref().is_none_or(|(b, _)| overlap > *b) {
            best = Some((overlap, sentence));
        }
    }
    best.map(|(_, s)| s)
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_new_tokens: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Client for `POST {"model", "prompt", "max_new_tokens"} -> {"text"}`.
pub struct RemoteLlm {
    client: reqwest::Client,
    endpoint: Url,
    model_id: String,
}

impl RemoteLlm {
    pub fn new(endpoint: Url, model_id: impl Into<String>) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            model_id: model_id.into(),
        })
    }
}

#[async_trait]
impl LlmClient for RemoteLlm {
    async fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let resp = self
            .client
            .post(self.endpoint.clone())
            .json(&GenerateRequest {
                model: &self.model_id,
                prompt: &request.prompt,
                max_new_tokens: request.max_new_tokens,
            })
            .send()
            .await
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(LlmError::Unavailable(format!("HTTP {}", resp.status())));
        }
        let body: GenerateResponse = resp
            .json()
            .await
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        Ok(body.text)
    }
}

fn default_max_context_chars() -> usize {
    DEFAULT_MAX_CONTEXT_CHARS
}

fn default_max_new_tokens() -> u32 {
    DEFAULT_MAX_NEW_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub profile_id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<Url>,
    pub model_id: String,
    #[serde(default = "default_max_context_chars")]
    pub max_context_chars: usize,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
}

impl ModelProfile {
    pub fn stub(profile_id: impl Into<String>) -> Self {
        let profile_id = profile_id.into();
        Self {
            model_id: profile_id.clone(),
            profile_id,
            kind: BackendKind::Stub,
            endpoint_url: None,
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    pub fn remote(
        profile_id: impl Into<String>,
        model_id: impl Into<String>,
        endpoint_url: Option<Url>,
    ) -> Self {
        Self {
            profile_id: profile_id.into(),
            kind: BackendKind::Remote,
            endpoint_url,
            model_id: model_id.into(),
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    /// Remote profiles without an explicit endpoint read
    /// `SITEGROUNDER_LLM_URL`.
    pub fn build(&self) -> Result<Arc<dyn LlmClient>, LlmError> {
        match self.kind {
            BackendKind::Stub => Ok(Arc::new(StubLlm)),
            BackendKind::Remote => {
                let endpoint = match &self.endpoint_url {
                    Some(url) => url.clone(),
                    None => {
                        let raw = std::env::var(LLM_URL_ENV).map_err(|_| {
                            LlmError::InvalidProfile(format!(
                                "remote profile {} needs endpoint_url or {LLM_URL_ENV}",
                                self.profile_id
                            ))
                        })?;
                        Url::parse(&raw).map_err(|e| LlmError::InvalidProfile(e.to_string()))?
                    }
                };
                Ok(Arc::new(RemoteLlm::new(endpoint, self.model_id.clone())?))
            }
        }
    }

    pub fn chain_options(&self, k: usize) -> ChainOptions {
        ChainOptions {
            k,
            max_context_chars: self.max_context_chars,
            max_new_tokens: self.max_new_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub k: usize,
    pub max_context_chars: usize,
    pub max_new_tokens: u32,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_context_chars: DEFAULT_MAX_CONTEXT_CHARS,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub standalone_question: String,
    pub hits: Vec<SearchHit>,
    pub context_text: String,
}

impl RetrievedContext {
    pub fn new(
        standalone_question: String,
        hits: Vec<SearchHit>,
        max_context_chars: usize,
    ) -> Self {
        let joined = hits
            .iter()
            .map(|h| h.metadata.text.as_str())
            .collect::<Vec<_>>()
            .join(CONTEXT_SEPARATOR);
        let context_text = match joined.char_indices().nth(max_context_chars) {
            Some((byte, _)) => joined[..byte].to_string(),
            None => joined,
        };
        Self {
            standalone_question,
            hits,
            context_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub chunk_id: String,
    pub source_url: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurnResult {
    pub answer: String,
    pub standalone_question: String,
    pub sources: Vec<SourceRef>,
}

#[derive(Debug, thiserror::Error)]
pub enum ChainError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("index dimension {index} does not match embedder dimension {embedder}")]
    DimensionMismatch { index: usize, embedder: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl ChainError {
    /// True when a model backend (embedding or generation) could not be
    /// reached.
    pub fn is_backend_unavailable(&self) -> bool {
        matches!(
            self,
            ChainError::Llm(LlmError::Unavailable(_))
                | ChainError::Embedding(EmbedError::RemoteUnavailable(_))
        )
    }
}

/// Rewrites a follow-up into a standalone question. With no history the
/// question is returned untouched and the model is not called.
pub async fn condense_question(
    history: &[ChatMessage],
    question: &str,
    llm: &dyn LlmClient,
) -> Result<String, LlmError> {
    if history.is_empty() {
        return Ok(question.to_string());
    }
    let request = LlmRequest {
        kind: PromptKind::Condense,
        prompt: render_condense_prompt(history, question),
        question: question.to_string(),
        history: history.to_vec(),
        context: String::new(),
        max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
    };
    let out = llm.complete(&request).await?;
    let out = out.trim();
    Ok(if out.is_empty() {
        question.to_string()
    } else {
        out.to_string()
    })
}

/// Runs one turn: condense, embed, search, answer, remember.
/// The session is only modified when the whole turn succeeds.
pub async fn answer_turn(
    session: &mut ChatSession,
    question: &str,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    llm: &dyn LlmClient,
    opts: &ChainOptions,
) -> Result<ChatTurnResult, ChainError> {
    if index.dim() != embedder.dim() {
        return Err(ChainError::DimensionMismatch {
            index: index.dim(),
            embedder: embedder.dim(),
        });
    }
    let standalone = condense_question(session.history(), question, llm).await?;
    let query = embedder.embed(&standalone).await?;
    let hits = index.search(&query, opts.k)?;
    let retrieved = RetrievedContext::new(standalone, hits, opts.max_context_chars);

    let request = LlmRequest {
        kind: PromptKind::Answer,
        prompt: render_answer_prompt(&retrieved.context_text, &retrieved.standalone_question),
        question: retrieved.standalone_question.clone(),
        history: session.history().to_vec(),
        context: retrieved.context_text.clone(),
        max_new_tokens: opts.max_new_tokens,
    };
    let answer = llm.complete(&request).await?.trim().to_string();

    session.push_turn(question, answer.clone());
    Ok(ChatTurnResult {
        answer,
        standalone_question: retrieved.standalone_question,
        sources: retrieved
            .hits
            .into_iter()
            .map(|h| SourceRef {
                chunk_id: h.chunk_id,
                source_url: h.metadata.source_url,
                score: h.score,
            })
            .collect(),
    })
}
