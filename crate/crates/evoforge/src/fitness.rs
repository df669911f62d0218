//! The fitness abstraction: a prompt scored against a fixed dev set, plus a
//! text-keyed score cache so identical prompt texts are never re-evaluated.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::EvoError;
use crate::prompt::{Prompt, Score};
use crate::sim::{synthetic_fitness, SyntheticTask};

/// `f_D`: scores one prompt over the configured dev set. Implementations
/// must be deterministic for a fixed dev set and cached completions.
pub trait FitnessFunction: Send + Sync {
    fn evaluate(&self, prompt: &Prompt) -> Result<Score, EvoError>;

    /// Number of dev examples behind one evaluation; 0 for synthetic tasks.
    fn dev_size(&self) -> usize {
        0
    }
}

/// Caches scores by prompt text for one task; duplicate texts in or across
/// populations cost nothing to re-score.
pub struct CachedFitness {
    inner: Box<dyn FitnessFunction>,
    task_id: String,
    enabled: bool,
    cache: Mutex<HashMap<String, Score>>,
    hits: AtomicU64,
}

impl CachedFitness {
    pub fn new(inner: Box<dyn FitnessFunction>, task_id: impl Into<String>) -> Self {
        CachedFitness {
            inner,
            task_id: task_id.into(),
            enabled: true,
            cache: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
        }
    }

    /// Pass-through mode for full re-evaluation (cost-model measurements).
    pub fn disabled(inner: Box<dyn FitnessFunction>, task_id: impl Into<String>) -> Self {
        CachedFitness {
            enabled: false,
            ..CachedFitness::new(inner, task_id)
        }
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }
}

impl FitnessFunction for CachedFitness {
    fn evaluate(&self, prompt: &Prompt) -> Result<Score, EvoError> {
        if self.enabled {
            if let Some(score) = self.cache.lock().unwrap().get(&prompt.text) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(*score);
            }
        }
        let score = self.inner.evaluate(prompt)?;
        if self.enabled {
            self.cache
                .lock()
                .unwrap()
                .insert(prompt.text.clone(), score);
        }
        Ok(score)
    }

    fn dev_size(&self) -> usize {
        self.inner.dev_size()
    }
}

/// Synthetic fitness over a [`SyntheticTask`]; needs no provider.
pub struct SyntheticFitness {
    pub task: SyntheticTask,
}

impl FitnessFunction for SyntheticFitness {
    fn evaluate(&self, prompt: &Prompt) -> Result<Score, EvoError> {
        Score::new(synthetic_fitness(&prompt.text, &self.task))
    }
}

/// Fitness from a plain closure; handy for experiments and tests.
pub struct FnFitness<F: Fn(&str) -> f64 + Send + Sync>(pub F);

impl<F: Fn(&str) -> f64 + Send + Sync> FitnessFunction for FnFitness<F> {
    fn evaluate(&self, prompt: &Prompt) -> Result<Score, EvoError> {
        Score::new((self.0)(&prompt.text))
    }
}
