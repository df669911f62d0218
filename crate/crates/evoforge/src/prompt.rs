//! Core domain types: prompts, scores, populations.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::EvoError;

/// Stable identifier for a prompt within a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub String);

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Mints sequential prompt ids. One generator per run keeps ids unique and
/// reproducible.
#[derive(Debug, Default)]
pub struct IdGen {
    next: AtomicU64,
}

impl IdGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&self) -> PromptId {
        let n = self.next.fetch_add(1, Ordering::Relaxed);
        PromptId(format!("p{n:04}"))
    }
}

/// Where a prompt came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Manual,
    LlmResampled,
    Evolved,
}

/// A candidate instruction. Text is trimmed on construction and must be
/// non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: PromptId,
    pub text: String,
    pub origin: Origin,
    #[serde(default)]
    pub parent_ids: Vec<PromptId>,
}

impl Prompt {
    pub fn new(
        id: PromptId,
        text: impl Into<String>,
        origin: Origin,
        parent_ids: Vec<PromptId>,
    ) -> Result<Self, EvoError> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(EvoError::Other(format!("prompt {id} has empty text")));
        }
        Ok(Prompt {
            id,
            text,
            origin,
            parent_ids,
        })
    }

    pub fn manual(id: PromptId, text: impl Into<String>) -> Result<Self, EvoError> {
        Prompt::new(id, text, Origin::Manual, Vec::new())
    }

    /// Whitespace-delimited tokens of the prompt text.
    pub fn tokens(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

/// A fitness value in task-metric units. Finite by construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self, EvoError> {
        if !value.is_finite() {
            return Err(EvoError::Other(format!("non-finite score {value}")));
        }
        Ok(Score(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A prompt together with its dev-set score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrompt {
    pub prompt: Prompt,
    pub score: Score,
}

/// Ordered multiset of scored prompts. Size stays at `capacity` across every
/// iteration boundary; duplicate texts are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    members: Vec<ScoredPrompt>,
    capacity: usize,
}

impl Population {
    pub fn new(members: Vec<ScoredPrompt>) -> Result<Self, EvoError> {
        if members.is_empty() {
            return Err(EvoError::Other("population must be non-empty".into()));
        }
        let capacity = members.len();
        Ok(Population { members, capacity })
    }

    pub fn members(&self) -> &[ScoredPrompt] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &ScoredPrompt {
        &self.members[index]
    }

    pub fn scores(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.score.value()).collect()
    }

    pub fn mean_score(&self) -> f64 {
        let sum: f64 = self.members.iter().map(|m| m.score.value()).sum();
        sum / self.members.len() as f64
    }

    /// Index of the member with the highest score; ties go to the lowest index.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.members.iter().enumerate().skip(1) {
            if m.score.value() > self.members[best].score.value() {
                best = i;
            }
        }
        best
    }
}

/// The member with the highest score; ties broken by lowest index.
pub fn best_of(population: &Population) -> &ScoredPrompt {
    population.get(population.best_index())
}
