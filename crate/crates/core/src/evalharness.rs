//! Question-set evaluation across model profiles.
//!
//! Answers are scored automatically with [`containment_score`]; star ratings
//! (1–5) are entered by a human afterwards via [`EvalReport::annotate_rating`].
//! The harness never fills ratings in itself.

use std::collections::HashMap;
use std::collections::HashSet;
use std::io::BufRead;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::conversation::{answer_turn, ChatSession, LlmClient, LlmError, ModelProfile, SourceRef};
use crate::embedding::{tokenize, Embedder};
use crate::jsonl::{self, JsonlError};
use crate::vector_index::VectorIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub qid: u32,
    pub prompt: String,
    #[serde(default)]
    pub is_followup: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follows: Option<u32>,
    pub reference_answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub qid: u32,
    pub profile_id: String,
    pub session_id: String,
    pub prompt: String,
    pub answer: String,
    pub standalone_question: String,
    pub sources: Vec<SourceRef>,
    pub rating: Option<u8>,
    pub containment: f64,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub profile_id: String,
    pub records: usize,
    pub rated: usize,
    /// Mean over rated records only; `None` until something is rated.
    pub mean_rating: Option<f64>,
    pub mean_containment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub profile_ids: Vec<String>,
    pub records: Vec<EvalRecord>,
    pub summaries: Vec<ProfileSummary>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid question set: {0}")]
    InvalidQuestions(String),
    #[error("no record for qid {qid} under profile {profile_id:?}")]
    UnknownRecord { qid: u32, profile_id: String },
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(i64),
    #[error(transparent)]
    Profile(#[from] LlmError),
    #[error(transparent)]
    Questions(#[from] JsonlError),
    #[error("report json: {0}")]
    Report(#[from] serde_json::Error),
}

/// Fraction of distinct reference tokens that also occur in the answer.
pub fn containment_score(answer: &str, reference: &str) -> f64 {
    let reference: HashSet<String> = tokenize(reference).collect();
    let answer: HashSet<String> = tokenize(answer).collect();
    if reference.is_empty() {
        return if answer.is_empty() { 1.0 } else { 0.0 };
    }
    reference.intersection(&answer).count() as f64 / reference.len() as f64
}

pub fn read_questions<R: BufRead>(input: R) -> Result<Vec<EvalQuestion>, EvalError> {
    let questions: Vec<EvalQuestion> = jsonl::read_lines(input)?;
    validate_questions(&questions)?;
    Ok(questions)
}

pub fn validate_questions(questions: &[EvalQuestion]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    let mut prev: Option<u32> = None;
    for q in questions {
        if prev.is_some_and(|p| q.qid <= p) {
            return Err(EvalError::InvalidQuestions(format!(
                "qids must be strictly increasing (qid {} after {})",
                q.qid,
                prev.unwrap_or_default()
            )));
        }
        match (q.is_followup, q.follows) {
            (true, None) => {
                return Err(EvalError::InvalidQuestions(format!(
                    "qid {} is a follow-up but names no parent",
                    q.qid
                )))
            }
            (_, Some(parent)) if parent >= q.qid || !seen.contains(&parent) => {
                return Err(EvalError::InvalidQuestions(format!(
                    "qid {} follows unknown or later qid {parent}",
                    q.qid
                )))
            }
            (false, Some(_)) => {
                return Err(EvalError::InvalidQuestions(format!(
                    "qid {} names a parent but is not marked as a follow-up",
                    q.qid
                )))
            }
            _ => {}
        }
        seen.insert(q.qid);
        prev = Some(q.qid);
    }
    Ok(())
}

/// Root question of each follow-up chain, keyed by qid.
fn thread_roots(questions: &[EvalQuestion]) -> HashMap<u32, u32> {
    let mut roots = HashMap::new();
    for q in questions {
        let root = match q.follows {
            Some(parent) => roots.get(&parent).copied().unwrap_or(parent),
            None => q.qid,
        };
        roots.insert(q.qid, root);
    }
    roots
}

/// A profile together with the client that serves it.
#[derive(Clone)]
pub struct EvalTarget {
    pub profile: ModelProfile,
    pub llm: Arc<dyn LlmClient>,
}

impl EvalTarget {
    pub fn from_profile(profile: ModelProfile) -> Result<Self, LlmError> {
        let llm = profile.build()?;
        Ok(Self { profile, llm })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub k: usize,
    /// Evaluate profiles concurrently. Sessions never cross profiles, so
    /// results are the same either way.
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: crate::conversation::DEFAULT_K,
            parallel: false,
        }
    }
}

pub async fn run_eval(
    questions: &[EvalQuestion],
    profiles: &[ModelProfile],
    index: &VectorIndex,
    embedder: &dyn Embedder,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let targets = profiles
        .iter()
        .cloned()
        .map(EvalTarget::from_profile)
        .collect::<Result<Vec<_>, _>>()?;
    run_eval_targets(questions, &targets, index, embedder, opts).await
}

pub async fn run_eval_targets(
    questions: &[EvalQuestion],
    targets: &[EvalTarget],
    index: &VectorIndex,
    embedder: &dyn Embedder,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    validate_questions(questions)?;
    let per_profile: Vec<Vec<EvalRecord>> = if opts.parallel {
        futures::future::join_all(
            targets
                .iter()
                .map(|t| eval_profile(questions, t, index, embedder, opts.k)),
        )
        .await
    } else {
        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            out.push(eval_profile(questions, t, index, embedder, opts.k).await);
        }
        out
    };
    let mut report = EvalReport {
        run_id: new_run_id(),
        created_at: Utc::now(),
        profile_ids: targets
            .iter()
            .map(|t| t.profile.profile_id.clone())
            .collect(),
        records: per_profile.into_iter().flatten().collect(),
        summaries: Vec::new(),
    };
    report.refresh_aggregates();
    Ok(report)
}

fn new_run_id() -> String {
    let now = Utc::now();
    format!(
        "run-{}-{:09}",
        now.format("%Y%m%dT%H%M%S"),
        now.timestamp_subsec_nanos()
    )
}

async fn eval_profile(
    questions: &[EvalQuestion],
    target: &EvalTarget,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    k: usize,
) -> Vec<EvalRecord> {
    let roots = thread_roots(questions);
    let profile_id = &target.profile.profile_id;
    let chain = target.profile.chain_options(k);
    let mut sessions: HashMap<u32, ChatSession> = HashMap::new();
    let mut records = Vec::with_capacity(questions.len());

    for q in questions {
        let root = roots[&q.qid];
        let session = sessions.entry(root).or_insert_with(|| {
            ChatSession::new(format!("{profile_id}/thread-{root}"), profile_id.clone())
        });
        let started = Instant::now();
        let outcome = answer_turn(
            session,
            &q.prompt,
            index,
            embedder,
            target.llm.as_ref(),
            &chain,
        )
        .await;
        let latency_ms = started.elapsed().as_millis() as u64;
        let record = match outcome {
            Ok(turn) => EvalRecord {
                qid: q.qid,
                profile_id: profile_id.clone(),
                session_id: session.session_id.clone(),
                prompt: q.prompt.clone(),
                containment: containment_score(&turn.answer, &q.reference_answer),
                answer: turn.answer,
                standalone_question: turn.standalone_question,
                sources: turn.sources,
                rating: None,
                latency_ms,
                error: None,
            },
            Err(err) => {
                tracing::warn!(qid = q.qid, profile = %profile_id, error = %err, "question failed");
                EvalRecord {
                    qid: q.qid,
                    profile_id: profile_id.clone(),
                    session_id: session.session_id.clone(),
                    prompt: q.prompt.clone(),
                    answer: String::new(),
                    standalone_question: String::new(),
                    sources: Vec::new(),
                    rating: None,
                    containment: containment_score("", &q.reference_answer),
                    latency_ms,
                    error: Some(err.to_string()),
                }
            }
        };
        records.push(record);
    }
    records
}

impl EvalReport {
    pub fn annotate_rating(
        &mut self,
        qid: u32,
        profile_id: &str,
        rating: i64,
    ) -> Result<(), EvalError> {
        if !(1..=5).contains(&rating) {
            return Err(EvalError::RatingOutOfRange(rating));
        }
        let record = self
            .records
            .iter_mut()
            .find(|r| r.qid == qid && r.profile_id == profile_id)
            .ok_or_else(|| EvalError::UnknownRecord {
                qid,
                profile_id: profile_id.to_string(),
            })?;
        record.rating = Some(rating as u8);
        self.refresh_aggregates();
        Ok(())
    }

    pub fn summary(&self, profile_id: &str) -> Option<&ProfileSummary> {
        self.summaries.iter().find(|s| s.profile_id == profile_id)
    }

    pub fn refresh_aggregates(&mut self) {
        self.summaries = compute_summaries(&self.profile_ids, &self.records);
    }

    /// True when the stored summaries match the records.
    pub fn aggregates_consistent(&self) -> bool {
        self.summaries == compute_summaries(&self.profile_ids, &self.records)
    }

    pub fn to_json_pretty(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(s)?)
    }
}

fn compute_summaries(profile_ids: &[String], records: &[EvalRecord]) -> Vec<ProfileSummary> {
    profile_ids
        .iter()
        .map(|pid| {
            let mine: Vec<&EvalRecord> = records.iter().filter(|r| &r.profile_id == pid).collect();
            let ratings: Vec<f64> = mine
                .iter()
                .filter_map(|r| r.rating)
                .map(f64::from)
                .collect();
            let mean_containment = if mine.is_empty() {
                0.0
            } else {
                mine.iter().map(|r| r.containment).sum::<f64>() / mine.len() as f64
            };
            ProfileSummary {
                profile_id: pid.clone(),
                records: mine.len(),
                rated: ratings.len(),
                mean_rating: (!ratings.is_empty())
                    .then(|| ratings.iter().sum::<f64>() / ratings.len() as f64),
                mean_containment,
            }
        })
        .collect()
}
