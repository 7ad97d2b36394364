//! Ingest job records.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Crawling,
    Embedding,
    Indexing,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    /// Forward one step along the pipeline, or to failed from anywhere
    /// not yet terminal.
    pub fn can_move_to(self, next: JobState) -> bool {
        if self.is_terminal() {
            return false;
        }
        match next {
            JobState::Failed => true,
            JobState::Pending => false,
            _ => next as u8 == self as u8 + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestJob {
    pub job_id: String,
    pub seed_url: String,
    pub state: JobState,
    pub pages_fetched: usize,
    pub chunks_indexed: usize,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JobError {
    #[error("ingest job {0} is already running")]
    Busy(String),
    #[error("unknown job {0}")]
    Unknown(String),
    #[error("job {job_id} cannot move from {from:?} to {to:?}")]
    BadTransition {
        job_id: String,
        from: JobState,
        to: JobState,
    },
}

#[derive(Default)]
struct Inner {
    jobs: HashMap<String, IngestJob>,
    active: Option<String>,
}

/// All jobs ever started, with at most one non-terminal at a time.
#[derive(Default)]
pub struct JobRegistry {
    inner: Mutex<Inner>,
}

impl JobRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(&self, seed_url: &str) -> Result<IngestJob, JobError> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(active) = &inner.active {
            return Err(JobError::Busy(active.clone()));
        }
        let now = Utc::now();
        let job = IngestJob {
            job_id: uuid::Uuid::new_v4().to_string(),
            seed_url: seed_url.to_string(),
            state: JobState::Pending,
            pages_fetched: 0,
            chunks_indexed: 0,
            error: None,
            created_at: now,
            updated_at: now,
        };
        inner.active = Some(job.job_id.clone());
        inner.jobs.insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    pub fn get(&self, job_id: &str) -> Option<IngestJob> {
        self.inner.lock().unwrap().jobs.get(job_id).cloned()
    }

    pub fn active(&self) -> Option<String> {
        self.inner.lock().unwrap().active.clone()
    }

    /// Moves a job to `next`, applying `update` to its counters.
    pub fn transition(
        &self,
        job_id: &str,
        next: JobState,
        update: impl FnOnce(&mut IngestJob),
    ) -> Result<(), JobError> {
        let mut inner = self.inner.lock().unwrap();
        let job = inner
            .jobs
            .get_mut(job_id)
            .ok_or_else(|| JobError::Unknown(job_id.to_string()))?;
        if !job.state.can_move_to(next) {
            return Err(JobError::BadTransition {
                job_id: job_id.to_string(),
                from: job.state,
                to: next,
            });
        }
        job.state = next;
        job.updated_at = Utc::now();
        update(job);
        if next.is_terminal() && inner.active.as_deref() == Some(job_id) {
            inner.active = None;
        }
        Ok(())
    }

    pub fn fail(&self, job_id: &str, error: impl Into<String>) -> Result<(), JobError> {
        let error = error.into();
        self.transition(job_id, JobState::Failed, |j| j.error = Some(error))
    }
}
